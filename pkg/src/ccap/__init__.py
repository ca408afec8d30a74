"""Credit-card approval prediction pipeline.

Batch pipeline for binary credit-approval scoring: CSV ingestion and
preprocessing, feature engineering, SMOTE rebalancing, six from-scratch
base learners plus an MLP, a stacking ensemble with out-of-fold level-1
predictions, and a five-metric evaluation harness with ROC/PR reports.
"""

__version__ = "0.1.0"
