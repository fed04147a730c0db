from blockrec.data.generator import GeneratorConfig, generate_corpus
from blockrec.data.gmm import GmmModel, fit_gmm
from blockrec.data.io import read_dataset, split_dataset, split_sizes, write_dataset
from blockrec.data.pipeline import build_example, build_examples
from blockrec.data.records import (
    QueryExample,
    RawQueryLog,
    RawSuggestion,
    Rejection,
    SuggestionRecord,
)

__all__ = [
    "GeneratorConfig", "GmmModel", "QueryExample", "RawQueryLog", "RawSuggestion", "Rejection",
    "SuggestionRecord", "build_example", "build_examples", "fit_gmm", "generate_corpus",
    "read_dataset", "split_dataset", "split_sizes", "write_dataset",
]
