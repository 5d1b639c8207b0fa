#!/usr/bin/env python3
"""End-to-end demonstration experiment on the deterministic toy corpus:
builds the datasets, starts the mock backends, sweeps every variant over
base-set subsets and seeds, and renders the score tables."""

import argparse
import json
import sys
import time
from pathlib import Path

from capref.backends.servers import MockSuite
from capref.pipeline.config import EndpointConfig, ExperimentConfig
from capref.pipeline.report import machine_report_text, machine_rows, render_scores_html, render_scores_table
from capref.pipeline.run import sweep
from capref.toydata import build_toy_world


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--workdir", default="mock-sweep", help="output directory")
    parser.add_argument("--base-images", type=int, default=1000)
    parser.add_argument("--additional-images", type=int, default=400)
    parser.add_argument("--test-images", type=int, default=2500)
    parser.add_argument("--sizes", type=int, nargs="+", default=[50, 200, 800])
    parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    parser.add_argument("--workers", type=int, default=4)
    args = parser.parse_args()

    workdir = Path(args.workdir)
    t0 = time.time()
    world = build_toy_world(
        workdir / "data",
        n_base=args.base_images,
        n_additional=args.additional_images,
        n_test=args.test_images,
    )
    print(f"toy corpus written under {workdir / 'data'}", file=sys.stderr)
    with MockSuite() as suite:
        backends = {
            kind: EndpointConfig(url=server.url, identity=server.identity, max_batch=500)
            for kind, server in suite.servers.items()
        }
        config = ExperimentConfig(
            name="mock-sweep",
            target_language="de",
            base_dataset=str(world.base),
            additional_dataset=str(world.additional),
            test_dataset=str(world.test),
            extension_dataset=str(world.extension),
            backends=backends,
            seeds=args.seeds,
            subset_sizes=args.sizes,
            store_dir=str(workdir / "store"),
            workers=args.workers,
        )
        (workdir / "exp.json").write_text(
            json.dumps(
                {
                    "name": config.name,
                    "target_language": config.target_language,
                    "base_dataset": config.base_dataset,
                    "additional_dataset": config.additional_dataset,
                    "test_dataset": config.test_dataset,
                    "extension_dataset": config.extension_dataset,
                    "backends": {k: vars(v) for k, v in backends.items()},
                    "seeds": config.seeds,
                    "subset_sizes": config.subset_sizes,
                    "store_dir": config.store_dir,
                },
                indent=2,
            )
        )
        result = sweep(config)
        report_dir = workdir / "report"
        report_dir.mkdir(parents=True, exist_ok=True)
        rows = machine_rows(result)
        (report_dir / "report.jsonl").write_text(machine_report_text(result))
        (report_dir / "report.txt").write_text(render_scores_table(rows))
        (report_dir / "report.html").write_text(render_scores_html(rows))
        print(render_scores_table(rows))
        print(
            f"swept {len(result.records)} cells in {time.time() - t0:.1f}s; "
            f"reports under {report_dir}",
            file=sys.stderr,
        )
    return 0


if __name__ == "__main__":
    sys.exit(main())
