#!/usr/bin/env python3
"""Run the bundled mock LLM server standalone.

Useful for driving the service by hand without a real provider:

    python scripts/mock_llm_server.py --port 9001 --behavior repair

Behaviors:
    clean   always answers with secure AES-GCM Java code
    ecb     always answers with ECB-mode Java code (never repairs)
    repair  answers with ECB code until the prompt mentions CWE-327,
            then switches to the secure version
    echo    returns the prompt verbatim
"""

import argparse
import signal
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parents[1] / "src"))

from secgen.mock_llm import MockLlmServer, fenced  # noqa: E402

CLEAN_JAVA = (Path(__file__).parents[1] / "tests/fixtures/clean_gcm.java").read_text().rstrip()
ECB_JAVA = (Path(__file__).parents[1] / "tests/fixtures/ecb.java").read_text().rstrip()


def build_responder(behavior: str):
    if behavior == "clean":
        return lambda prompt: fenced(CLEAN_JAVA, "java")
    if behavior == "ecb":
        return lambda prompt: fenced(ECB_JAVA, "java")
    if behavior == "echo":
        return lambda prompt: prompt
    if behavior == "repair":
        return lambda prompt: fenced(
            CLEAN_JAVA if "CWE-327" in prompt else ECB_JAVA, "java"
        )
    raise ValueError(f"unknown behavior {behavior!r}")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--host", default="127.0.0.1")
    parser.add_argument("--port", type=int, default=9001)
    parser.add_argument(
        "--behavior", choices=["clean", "ecb", "repair", "echo"], default="repair"
    )
    parser.add_argument("--api-key", default=None, help="require this bearer token")
    args = parser.parse_args()

    server = MockLlmServer(
        build_responder(args.behavior),
        host=args.host,
        port=args.port,
        require_key=args.api_key,
    ).start()
    print(f"mock LLM ({args.behavior}) listening on {server.endpoint}")
    try:
        signal.pause()
    except (KeyboardInterrupt, AttributeError):
        pass
    finally:
        server.stop()
    return 0


if __name__ == "__main__":
    sys.exit(main())
