"""
Serves the offline CQM solving service, for running the `cqm` solver without a
remote account:

    python server.py --token secret &
    EQUIRESTORE_CQM_TOKEN=secret python restore.py solve --solver cqm \
        --cqm-endpoint http://localhost:8080
"""

import argparse
import json
import pathlib

from src.cqm.service import create_app


def parse_args():
    parser = argparse.ArgumentParser()
    parser.add_argument(
        "--port",
        type=int,
        default=8080,
        help="The server port",
    )
    parser.add_argument(
        "--token",
        required=True,
        help="The bearer credential clients must present",
    )
    parser.add_argument(
        "--sample",
        type=pathlib.Path,
        help="JSON file with a fixed sample to answer every problem with",
    )
    parser.add_argument(
        "--pending-polls",
        type=int,
        default=0,
        help="Status polls answered with PENDING before the result",
    )

    return parser.parse_args()


if __name__ == "__main__":
    args = parse_args()
    fixed_sample = json.loads(args.sample.read_text()) if args.sample else None
    app = create_app(args.token, fixed_sample, args.pending_polls)
    app.run(port=args.port)
