"""HGMN: hypergraph convolution over SSM-fused structural embeddings."""

__version__ = "0.1.0"
