"""Batch command-line front end: subcommands over bit-exact file formats."""
