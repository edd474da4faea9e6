"""Aspect-level sentiment classification with a convolutional network over
aspect-aware word embeddings, implemented in numpy."""

from .attention import atten_emb1, atten_emb2, attention_weights, cosine
from .convnet import ModelParams, forward, init_params
from .data_ingest import Corpus, Example, RawInstance, Vocab, build_corpus, parse_dataset, \
    preprocess
from .embeddings import EmbeddingTable, aspect_vector, embed_sentence, load_pretrained
from .metrics import accuracy, confusion_matrix, macro_f1
from .training import TrainConfig, grad_check, train

__version__ = "0.1.0"
