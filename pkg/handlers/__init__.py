"""CLI subcommand handlers and exit code mapping."""
