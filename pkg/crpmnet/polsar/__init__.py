"""PolSAR scenes: covariance containers, feature vectors, synthetic scenes and tiling"""
