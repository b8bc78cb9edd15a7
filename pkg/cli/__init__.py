"""
Module with the command-line surface: run orchestration and one click command per subcommand
"""

from .app import cli, cli_main
