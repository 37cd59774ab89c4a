"""Core modules for the EV fleet FCR-D reserve bidding toolkit."""
