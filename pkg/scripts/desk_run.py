#!/usr/bin/env python3
"""End-to-end desk run against a scripted mock LLM: no real provider needed.

Starts the repair-mode mock LLM and the REST service in-process, then walks
the whole surface: a generation that converges after one repair round, a
direct analysis of insecure code, and a benchmark run with ranking retrieval.
Prints each step's result; exits non-zero if anything misbehaves.
"""

import json
import sys
import tempfile
import threading
import time
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parents[1] / "src"))

import requests
import uvicorn

from secgen.app import Application
from secgen.config import load_app_config
from secgen.mock_llm import MockLlmServer, fenced
from secgen.service import create_service

CLEAN_JAVA = (Path(__file__).parents[1] / "tests/fixtures/clean_gcm.java").read_text().rstrip()
ECB_JAVA = (Path(__file__).parents[1] / "tests/fixtures/ecb.java").read_text().rstrip()
INSECURE_EXAMPLE = Path(__file__).parents[1] / "tests/fixtures/insecure_derive_example.java"

SERVICE_PORT = 8411


def repair(prompt: str) -> str:
    return fenced(CLEAN_JAVA if "CWE-327" in prompt else ECB_JAVA, "java")


def main() -> int:
    workdir = Path(tempfile.mkdtemp(prefix="secgen-desk-"))
    mock = MockLlmServer(repair).start()
    print(f"mock LLM up at {mock.endpoint}")

    config_path = workdir / "secgen.json"
    config_path.write_text(
        json.dumps(
            {
                "llms": [
                    {
                        "name": "mock",
                        "endpoint": mock.endpoint,
                        "api_key": "desk-key",
                        "model": "mock-model",
                        "timeout": 10.0,
                    }
                ],
                "engines": [{"name": "builtin", "kind": "builtin"}],
                "policy": {"max_iterations": 3},
                "suite_path": "bundled",
                "rules_path": "bundled",
                "listen_address": f"127.0.0.1:{SERVICE_PORT}",
                "store_path": str(workdir / "store"),
            },
            indent=2,
        )
    )
    print(f"config written to {config_path}")

    app = Application(load_app_config(config_path))
    server = uvicorn.Server(
        uvicorn.Config(create_service(app), host="127.0.0.1", port=SERVICE_PORT, log_level="warning")
    )
    threading.Thread(target=server.run, daemon=True).start()
    base = f"http://127.0.0.1:{SERVICE_PORT}"
    for _ in range(100):
        try:
            requests.get(f"{base}/v1/llms", timeout=1)
            break
        except requests.ConnectionError:
            time.sleep(0.1)
    print(f"service up at {base}")

    failures = 0

    trace = requests.post(
        f"{base}/v1/generate", json={"prompt": "write AES encryption in java"}, timeout=60
    ).json()
    iterations = len(trace["iterations"])
    print(f"\n[generate] clean={trace['clean']} after {iterations} iteration(s)")
    if not (trace["clean"] and iterations == 2):
        print("  UNEXPECTED: repair mock should converge on the second pass")
        failures += 1

    findings = requests.post(
        f"{base}/v1/analyze",
        json={"language": "java", "source": INSECURE_EXAMPLE.read_text()},
        timeout=30,
    ).json()
    print(f"[analyze] {len(findings)} finding(s) in the bundled insecure example:")
    for finding in findings:
        print(f"  line {finding['line_start']:>3}  {finding['cwe']:<8} {finding['rule_id']}")
    if not {"CWE-798", "CWE-760"} <= {f["cwe"] for f in findings}:
        print("  UNEXPECTED: hardcoded credential / static salt not both detected")
        failures += 1

    run_id = requests.post(f"{base}/v1/benchmark/run", timeout=10).json()["run_id"]
    print(f"[benchmark] run {run_id} started")
    ranking = None
    for _ in range(300):
        response = requests.get(f"{base}/v1/benchmark/results", timeout=10)
        if response.status_code == 200 and response.json()["run_id"] == run_id:
            ranking = response.json()
            break
        time.sleep(0.2)
    if ranking is None:
        print("  UNEXPECTED: benchmark never finished")
        failures += 1
    else:
        for entry in ranking["entries"]:
            print(
                f"  {entry['llm_name']}: mean={entry['mean_score']:.3f} "
                f"passes={entry['pass_count']}"
            )

    server.should_exit = True
    mock.stop()
    print("\ndesk run", "FAILED" if failures else "complete", f"(workdir: {workdir})")
    return 1 if failures else 0


if __name__ == "__main__":
    sys.exit(main())
