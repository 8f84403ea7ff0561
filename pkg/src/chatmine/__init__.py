"""Chat-log mining toolkit: disentangle developer live chats into dialogs and
extract issue-solution pairs with small, fully in-repo neural models."""

__version__ = "0.1.0"
