"""Command-line verbs. Each module registers one subcommand."""
