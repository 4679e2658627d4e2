"""Spatiotemporal self-supervised pair mining for LiDAR sequences.

Pipeline: ground-plane removal (RANSAC) -> over-segmentation (DBSCAN) ->
cross-frame cluster tracking (assignment on a location+feature cost) ->
positive-pair emission, plus a desk-scale point encoder trained with
point-to-cluster and inter-frame losses on those pairs.
"""

__version__ = "0.1.0"
