"""Complex-valued tensors, layers, networks and their training"""
