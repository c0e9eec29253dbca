"""TCGPN: temporal-correlation graph pre-trained network.

Library + CLI for correlation-graph construction, masking augmentations,
the temporal-correlation fusion encoder, self/semi-supervised pretraining,
MLP fine-tuning and a stock-backtest metric suite.
"""

__version__ = "0.1.0"
