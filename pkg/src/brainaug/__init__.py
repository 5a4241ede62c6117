"""Desk-scale synthetic data augmentation pipeline for brain-tumour segmentation."""

__version__ = "0.1.0"
