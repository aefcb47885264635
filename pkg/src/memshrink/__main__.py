"""
Local execution entry point.

    python -m memshrink run --scenario default.json --out out/

The MCP server runs with `memshrink-mcp` or `python -m memshrink.server`.
"""

import sys

from memshrink.cli import main

if __name__ == "__main__":
    sys.exit(main())
