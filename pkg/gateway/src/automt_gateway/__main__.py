"""Serve the gateway: `automt-gateway [--config routes.json] [--port 8008]`."""

import argparse

import uvicorn

from .app import create_app
from .config import load_gateway_config, stub_config


def main() -> None:
    parser = argparse.ArgumentParser(prog="automt-gateway")
    parser.add_argument("--config", help="route table JSON (defaults to all-stub routes)")
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=8008)
    args = parser.parse_args()
    config = load_gateway_config(args.config) if args.config else stub_config()
    uvicorn.run(create_app(config), host=args.host, port=args.port)


if __name__ == "__main__":
    main()
