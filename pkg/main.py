"""
Starting point for the ebmteach command line
"""
import logging
import sys

from cli import cli_main

logging.basicConfig(level=logging.INFO)
logging.getLogger("training").setLevel(logging.INFO)
logging.getLogger("sampling").setLevel(logging.WARNING)
logging.getLogger("cli").setLevel(logging.DEBUG)

if __name__ == '__main__':
    sys.exit(cli_main(sys.argv[1:]))
