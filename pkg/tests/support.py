"""Helpers shared across test modules."""


def one_hot_over(*token_seqs):
    from cuegrade.similarity import EmbeddingTable

    vocab = set()
    for seq in token_seqs:
        for tok in seq:
            vocab.add(tok if isinstance(tok, str) else tok.text)
    return EmbeddingTable.one_hot(vocab)
