import numpy as np

from blockrec.data import QueryExample, SuggestionRecord


def make_example(rng, n=6, d_raw=5, query_id=1):
    """Valid example: cluster ``i % 4``, clicks decreasing with index, gold = first four."""
    feats = rng.normal(size=(n, d_raw))
    cands = [
        SuggestionRecord(suggestion_id=10 + i, features=feats[i], click_rate=0.1 * (n - i),
                         cooccurrence_count=5, cluster_id=i % 4, rank_in_cluster=1 + i // 4)
        for i in range(n)
    ]
    return QueryExample(query_id=query_id, query_features=rng.normal(size=d_raw), impressions=500,
                        candidates=cands, labels=[10, 11, 12, 13])
