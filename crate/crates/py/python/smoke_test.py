"""Smoke test for the cogweb extension module.

Build and run from the repository root:

    cargo build --release -p cogweb-py --features extension-module
    cp target/release/libcogweb_py.so crates/py/python/cogweb.so
    python3 crates/py/python/smoke_test.py

or `maturin develop` inside crates/py, then run this script.
"""

import json
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import cogweb  # noqa: E402


def main():
    r = cogweb.rouge_l("open the cart page", "open the cart")
    assert r.lcs == 3 and abs(r.recall - 1.0) < 1e-12, r

    act = cogweb.Action.parse("type [7] [red scarf]")
    assert cogweb.Action.parse(act.format()) == act
    assert (act.kind, act.target_id, act.content) == ("type", 7, "red scarf")

    assert len(cogweb.enumerate_close_subsets(["click [3]", "click [5]"])) == 3
    assert sum(cogweb.bench_counts().values()) == 876

    report = cogweb.aggregate_means({
        "element_attribute_recognition": 53.2, "next_page_prediction": 83.9,
        "source_element_prediction": 65.6, "element_understanding": 60.0,
        "webpage_understanding": 62.0, "user_intention_prediction": 51.9,
        "popup_close": 91.4, "single_step_web_task": 90.3,
    })
    assert report["overall"] == 69.8, report

    with tempfile.TemporaryDirectory() as root:
        site = cogweb.crawl_fixture(os.path.join(root, "store"))
        summary = cogweb.generate_tasks(site, os.path.join(root, "tasks"), seed=7)
        manifest = open(os.path.join(root, "tasks", "tasks.jsonl")).read()
        checked = cogweb.validate_manifest(manifest)
        assert checked["total"] == sum(summary["counts"].values())
        first = manifest.splitlines()[0]
        gold = json.loads(first)["gold"]
        assert cogweb.score(first, gold.get("value") or gold.get("label")) == 100.0

    ep = cogweb.run_scripted_episode(
        ["## Final Action Summary\nAnswer now.\nstop [fixture]"], "name the site",
        check={"type": "answer_contains", "text": "fixture"},
    )
    assert ep["termination"] == "stopped" and ep["reward"] == 1, ep

    print("cogweb smoke test ok:", summary["counts"])


if __name__ == "__main__":
    main()
