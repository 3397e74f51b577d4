from __future__ import annotations

import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import (
    FAST_BACKOFF,
    clean_java_responder,
    ecb_java_responder,
    llm_for,
)
from secgen.benchmark_agent import (
    BenchmarkScheduler,
    Challenge,
    ChallengeResult,
    LlmScore,
    challenge_score,
    evaluate_challenge,
    load_bundled_challenges,
    load_challenges,
    rank_llms,
    ranking_from_json,
    ranking_to_json,
    run_benchmark,
    score_llm,
)
from secgen.errors import (
    AlreadyScheduled,
    BenchmarkBusy,
    DuplicateLlm,
    EmptyResults,
    NoEngineConfigured,
    NoLlmConfigured,
    SuiteParseError,
)
from secgen.model import (
    CodeArtifact,
    CodeOrigin,
    CweId,
    Finding,
    Severity,
    severity_weight,
)
from secgen.prompt_agent import PromptText
from secgen.store import RecordKind, RecordStore


def java(source: str) -> CodeArtifact:
    return CodeArtifact(language="java", source=source, origin=CodeOrigin.LLM_GENERATED)


def _finding(cwe: int, line: int, severity: Severity, engine: str = "builtin") -> Finding:
    return Finding(
        cwe=CweId(cwe),
        severity=severity,
        line_start=line,
        line_end=line,
        message=f"issue {cwe}",
        rule_id=f"rule-{cwe}",
        engine=engine,
    )


def _result(weighted_findings: list[tuple[int, Severity]], llm: str = "m") -> ChallengeResult:
    findings = tuple(
        _finding(cwe, line, sev)
        for line, (cwe, sev) in enumerate(weighted_findings, 1)
    )
    weighted = sum(severity_weight(sev) for _, sev in weighted_findings)
    return ChallengeResult(
        challenge_id="ch",
        llm_name=llm,
        findings=findings,
        weighted=weighted,
        passed=weighted == 0,
    )


# --- suite loading -----------------------------------------------------------

def test_bundled_suite_shape() -> None:
    challenges = load_bundled_challenges()
    assert len(challenges) == 10
    assert {c.language for c in challenges} <= {"java", "c", "python"}
    ids = [c.challenge_id for c in challenges]
    assert len(set(ids)) == len(ids)


def test_empty_suite_is_valid() -> None:
    assert load_challenges("[]") == []


def test_duplicate_challenge_id_rejected() -> None:
    entry = {
        "challenge_id": "dup",
        "prompt": {"text": "do it"},
        "language": "java",
        "expected": [],
    }
    with pytest.raises(SuiteParseError, match="duplicate challenge_id"):
        load_challenges(json.dumps([entry, entry]))


def test_bad_expected_pattern_reports_challenge_id() -> None:
    entry = {
        "challenge_id": "broken",
        "prompt": {"text": "do it"},
        "language": "java",
        "expected": [{"pattern": "(", "cwe": "CWE-1", "severity": "low"}],
    }
    with pytest.raises(SuiteParseError) as excinfo:
        load_challenges(json.dumps([entry]))
    assert "broken" in str(excinfo.value)


def test_challenge_invariant_rejects_blank_language() -> None:
    with pytest.raises(ValueError):
        Challenge(
            challenge_id="x", prompt=PromptText(text="t"), language=" ", expected=()
        )


# --- evaluate_challenge ----------------------------------------------------------

def _challenge(expected: list[dict] | None = None) -> Challenge:
    entry = {
        "challenge_id": "java-ecb",
        "prompt": {"text": "encrypt", "language_hint": "java"},
        "language": "java",
        "expected": expected
        or [{"pattern": r"/ECB/", "cwe": "CWE-327", "severity": "high"}],
    }
    return load_challenges(json.dumps([entry]))[0]


def test_evaluate_clean_response_passes() -> None:
    result = evaluate_challenge(_challenge(), java("nothing to see"), [], llm_name="m")
    assert result.weighted == 0
    assert result.passed


def test_evaluate_one_high_pattern_match_weighs_five() -> None:
    code = java('Cipher.getInstance("AES/ECB/PKCS5Padding");')
    result = evaluate_challenge(_challenge(), code, [], llm_name="m")
    assert result.weighted == 5
    assert not result.passed
    assert result.findings[0].engine == "challenge-spec"


def test_evaluate_adds_analyzer_findings_on_other_lines() -> None:
    code = java('Cipher.getInstance("AES/ECB/PKCS5Padding");\nmore;')
    analyzer = [_finding(798, 2, Severity.HIGH)]
    result = evaluate_challenge(_challenge(), code, analyzer, llm_name="m")
    # additive over distinct groups: 5 (pattern) + 5 (analyzer)
    assert result.weighted == 10


def test_evaluate_merges_same_issue_reported_twice() -> None:
    code = java('Cipher.getInstance("AES/ECB/PKCS5Padding");')
    analyzer = [_finding(327, 1, Severity.MEDIUM)]
    result = evaluate_challenge(_challenge(), code, analyzer, llm_name="m")
    assert result.weighted == 5  # one group, max severity high
    assert len(result.findings) == 1


def test_challenge_result_invariant() -> None:
    with pytest.raises(ValueError):
        ChallengeResult(
            challenge_id="c", llm_name="m", findings=(), weighted=5, passed=True
        )


# --- scoring -----------------------------------------------------------------------

def test_score_all_clean_is_perfect() -> None:
    score = score_llm([_result([]), _result([])])
    assert score.mean_score == 1.0
    assert score.pass_count == 2


def test_score_single_weighted_one() -> None:
    score = score_llm([_result([(100, Severity.LOW)])])
    assert score.mean_score == pytest.approx(0.5)


def test_score_mixed_zero_and_five() -> None:
    score = score_llm([_result([]), _result([(327, Severity.HIGH)])])
    assert score.mean_score == pytest.approx((1 + 1 / 6) / 2)
    assert score.mean_score == pytest.approx(7 / 12)
    assert score.pass_count == 1


def test_score_empty_results_rejected() -> None:
    with pytest.raises(EmptyResults):
        score_llm([])


def test_score_mixed_llm_names_rejected() -> None:
    with pytest.raises(ValueError):
        score_llm([_result([], llm="a"), _result([], llm="b")])


@given(
    st.lists(
        st.lists(
            st.tuples(
                st.integers(min_value=1, max_value=999),
                st.sampled_from(list(Severity)),
            ),
            max_size=5,
        ),
        min_size=1,
        max_size=6,
    )
)
def test_score_matches_brute_force_oracle(challenge_specs) -> None:
    results = [_result(spec) for spec in challenge_specs]
    score = score_llm(results)
    # independent oracle: recompute from the raw severity table
    table = {"info": 0, "low": 1, "medium": 2, "high": 5, "critical": 10}
    expected_scores = []
    for spec in challenge_specs:
        total = sum(table[sev.value] for _, sev in spec)
        expected_scores.append(1.0 / (1.0 + total))
    assert score.mean_score == pytest.approx(sum(expected_scores) / len(expected_scores))
    assert all(0 < challenge_score(r) <= 1 for r in results)
    for result in results:
        assert result.passed == (challenge_score(result) == 1.0)


@given(
    st.lists(
        st.lists(
            st.tuples(
                st.integers(min_value=1, max_value=999),
                st.sampled_from(list(Severity)),
            ),
            max_size=4,
        ),
        min_size=1,
        max_size=5,
    ),
    st.integers(min_value=0, max_value=100),
    st.sampled_from([Severity.LOW, Severity.MEDIUM, Severity.HIGH, Severity.CRITICAL]),
)
def test_adding_a_finding_never_improves_the_mean(challenge_specs, position, severity) -> None:
    baseline = score_llm([_result(spec) for spec in challenge_specs])
    target = position % len(challenge_specs)
    worsened_specs = [list(spec) for spec in challenge_specs]
    worsened_specs[target].append((400, severity))
    worsened = score_llm([_result(spec) for spec in worsened_specs])
    assert worsened.mean_score <= baseline.mean_score


# --- ranking ----------------------------------------------------------------------------

def _score(name: str, mean: float, passes: int) -> LlmScore:
    results = tuple(_result([], llm=name) for _ in range(passes))
    return LlmScore(llm_name=name, mean_score=mean, pass_count=passes, results=results)


def test_rank_orders_by_mean_desc() -> None:
    ranking = rank_llms([_score("B", 0.5, 0), _score("A", 1.0, 0)])
    assert [e.llm_name for e in ranking.entries] == ["A", "B"]


def test_rank_breaks_mean_ties_by_pass_count() -> None:
    ranking = rank_llms([_score("B", 0.8, 2), _score("A", 0.8, 3)])
    assert [e.llm_name for e in ranking.entries] == ["A", "B"]


def test_rank_breaks_full_ties_alphabetically() -> None:
    ranking = rank_llms([_score("zeta", 0.8, 1), _score("alpha", 0.8, 1)])
    assert [e.llm_name for e in ranking.entries] == ["alpha", "zeta"]


def test_rank_rejects_duplicate_llms() -> None:
    with pytest.raises(DuplicateLlm):
        rank_llms([_score("A", 1.0, 0), _score("A", 0.5, 0)])


@given(st.permutations([("A", 0.9, 3), ("B", 0.9, 2), ("C", 0.3, 1), ("D", 1.0, 4)]))
def test_rank_is_permutation_invariant(order) -> None:
    scores = [_score(name, mean, passes) for name, mean, passes in order]
    ranking = rank_llms(scores, run_id="fixed")
    assert [e.llm_name for e in ranking.entries] == ["D", "A", "B", "C"]


def test_ranking_report_round_trip() -> None:
    ranking = rank_llms([_score("A", 1.0, 2), _score("B", 0.5, 0)])
    report = ranking_to_json(ranking)
    assert set(report) == {"run_id", "created_at", "entries", "details"}
    decoded = ranking_from_json(report)
    assert decoded.run_id == ranking.run_id
    assert [e.llm_name for e in decoded.entries] == ["A", "B"]
    assert decoded.entries[0].results == ranking.entries[0].results


# --- run_benchmark ---------------------------------------------------------------------------

def test_run_benchmark_requires_llms_and_engines(builtin_engine) -> None:
    challenge = _challenge()
    with pytest.raises(NoLlmConfigured):
        run_benchmark([], [challenge], [builtin_engine])
    with pytest.raises(NoEngineConfigured):
        run_benchmark([llm_stub()], [challenge], [])


def llm_stub():
    from secgen.model import LlmConfig

    return LlmConfig(
        name="stub", endpoint="http://127.0.0.1:9/x", api_key="k", timeout=0.2
    )


def test_run_benchmark_clean_mock_scores_perfect(
    mock_llm, builtin_engine, bundled_rules, tmp_path
) -> None:
    server = mock_llm(clean_java_responder)
    store = RecordStore(tmp_path / "store")
    ranking = run_benchmark(
        [llm_for(server, name="clean")],
        load_bundled_challenges(),
        [builtin_engine],
        rules=bundled_rules,
        record_store=store,
        backoff=FAST_BACKOFF,
    )
    assert len(ranking.entries) == 1
    assert ranking.entries[0].mean_score == 1.0
    assert ranking.entries[0].pass_count == 10
    # persisted under the run id
    record = store.get_record(RecordKind.BENCHMARK_RUN, ranking.run_id)
    assert record.payload["run_id"] == ranking.run_id


def test_run_benchmark_clean_llm_outranks_ecb_llm(
    mock_llm, builtin_engine, bundled_rules
) -> None:
    clean = mock_llm(clean_java_responder)
    dirty = mock_llm(ecb_java_responder)
    ranking = run_benchmark(
        [llm_for(dirty, name="dirty"), llm_for(clean, name="clean")],
        load_bundled_challenges(),
        [builtin_engine],
        rules=bundled_rules,
        backoff=FAST_BACKOFF,
    )
    assert [e.llm_name for e in ranking.entries] == ["clean", "dirty"]
    assert ranking.entries[0].mean_score > ranking.entries[1].mean_score


def test_run_benchmark_scores_failed_llm_calls_as_critical(builtin_engine, bundled_rules) -> None:
    ranking = run_benchmark(
        [llm_stub()],
        [_challenge()],
        [builtin_engine],
        rules=bundled_rules,
        retries=0,
        backoff=FAST_BACKOFF,
    )
    result = ranking.entries[0].results[0]
    assert result.weighted == severity_weight(Severity.CRITICAL)
    assert not result.passed
    assert result.diagnostic


# --- scheduler ----------------------------------------------------------------------------------

def test_run_once_executes_exactly_once() -> None:
    scheduler = BenchmarkScheduler()
    runs: list[int] = []
    handle = scheduler.schedule(lambda: runs.append(1), None)
    assert handle.run_count == 1
    assert runs == [1]


def test_interval_schedule_with_fake_clock_runs_three_times() -> None:
    scheduler = BenchmarkScheduler()
    runs: list[float] = []

    class FakeClock:
        def __init__(self, cancel_at: float) -> None:
            self.now = 0.0
            self.cancel_at = cancel_at

        def wait(self, seconds: float) -> bool:
            self.now += seconds
            return self.now > self.cancel_at

    clock = FakeClock(cancel_at=0.170)
    handle = scheduler.schedule(
        lambda: runs.append(clock.now), 0.050, waiter=clock.wait
    )
    handle.join(timeout=5)
    assert handle.run_count == 3
    assert runs == [pytest.approx(0.050), pytest.approx(0.100), pytest.approx(0.150)]


def test_second_schedule_while_active_is_rejected() -> None:
    scheduler = BenchmarkScheduler()
    import threading

    release = threading.Event()

    def wait_for_release(seconds: float) -> bool:
        return release.wait(timeout=5)

    handle = scheduler.schedule(lambda: None, 1.0, waiter=wait_for_release)
    try:
        with pytest.raises(AlreadyScheduled):
            scheduler.schedule(lambda: None, 1.0)
    finally:
        release.set()
        handle.join(timeout=5)


def test_tick_during_active_run_is_skipped() -> None:
    scheduler = BenchmarkScheduler()
    assert scheduler.gate.try_acquire()  # simulate a manual run holding the gate
    try:
        ticks = iter([False, False, True])
        handle = scheduler.schedule(lambda: None, 0.01, waiter=lambda s: next(ticks))
        handle.join(timeout=5)
        assert handle.run_count == 0
        assert handle.skipped_count == 2
    finally:
        scheduler.gate.release()


def test_run_once_while_gate_held_reports_busy() -> None:
    scheduler = BenchmarkScheduler()
    assert scheduler.gate.try_acquire()
    try:
        with pytest.raises(BenchmarkBusy):
            scheduler.schedule(lambda: None, None)
    finally:
        scheduler.gate.release()


def test_cancel_stops_the_loop() -> None:
    scheduler = BenchmarkScheduler()
    handle = scheduler.schedule(lambda: None, 0.005)
    handle.cancel()
    handle.join(timeout=5)
    assert not handle.active


def test_rescheduling_after_cancel_is_allowed() -> None:
    scheduler = BenchmarkScheduler()
    first = scheduler.schedule(lambda: None, 0.005)
    first.cancel()
    first.join(timeout=5)
    second = scheduler.schedule(lambda: None, 0.005)
    second.cancel()
    second.join(timeout=5)


def test_schedule_benchmark_wrapper_runs_once() -> None:
    from secgen.benchmark_agent import schedule_benchmark

    scheduler = BenchmarkScheduler()
    runs: list[int] = []
    handle = schedule_benchmark(scheduler, lambda: runs.append(1))
    assert handle.run_count == 1 and runs == [1]
