#!/usr/bin/env python3
"""Serve the built-in 60-page fixture web site for manual crawling.

The site plants 20 interlinked relevant pages and 20 dead-end chains of
noise pages, so a focused crawl and a follow-everything baseline behave
measurably differently against it. Prints the seed URL and blocks until
interrupted.
"""
import argparse
import time

from ctiscout.synth import build_fixture_web, build_mini_site, serve_fixture_web


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--seed", type=int, default=7,
                        help="deterministic content seed")
    parser.add_argument("--mini", action="store_true",
                        help="serve the 10-page mini site instead")
    args = parser.parse_args()

    web = build_mini_site(args.seed) if args.mini else build_fixture_web(args.seed)
    with serve_fixture_web(web) as server:
        print(f"serving {len(web.pages)} pages "
              f"({len(web.relevant_paths)} relevant)", flush=True)
        print(f"seed URL: {server.url(web.seed_path)}")
        print("robots  :", server.url("/robots.txt"))
        print("Ctrl+C to stop", flush=True)
        try:
            while True:
                time.sleep(1)
        except KeyboardInterrupt:
            print("\nstopping")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
