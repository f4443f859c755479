"""Command-line engine; see sim_engine/main.py."""
