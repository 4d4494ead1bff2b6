"""Graph-in-network cross-modal retrieval: text GCN + image projection + pairwise loss."""
