#!/usr/bin/env python3
"""Start the five mock model servers and print a backends config block
ready to paste into an experiment config.  Runs until interrupted."""

import argparse
import json
import signal
import sys

from capref.backends.servers import MockSuite


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--max-batch", type=int, default=256, help="advertised batch size hint")
    args = parser.parse_args()
    suite = MockSuite()
    with suite:
        block = {
            kind: {"url": server.url, "identity": server.identity, "max_batch": args.max_batch}
            for kind, server in suite.servers.items()
        }
        print(json.dumps({"backends": block}, indent=2))
        print("mock backends up; Ctrl-C to stop", file=sys.stderr)
        try:
            signal.pause()
        except (KeyboardInterrupt, AttributeError):
            pass
    return 0


if __name__ == "__main__":
    sys.exit(main())
