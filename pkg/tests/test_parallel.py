"""Tests for job fan-out."""

import math

from moa_ffn.parallel import gather_in_processes, run_jobs


class TestRunJobs:
    def test_empty(self):
        assert run_jobs(math.sqrt, []) == []

    def test_in_process_keeps_order_and_returns_errors(self):
        outcomes = run_jobs(math.sqrt, [4.0, -1.0, 9.0])
        assert outcomes[0] == 2.0
        assert isinstance(outcomes[1], ValueError)
        assert outcomes[2] == 3.0

    def test_process_pool_matches_in_process(self):
        jobs = [1.0, 4.0, 16.0, -4.0]
        serial = run_jobs(math.sqrt, jobs, workers=1)
        pooled = run_jobs(math.sqrt, jobs, workers=2)
        assert pooled[:3] == serial[:3]
        assert isinstance(pooled[3], ValueError)


async def test_gather_in_processes_returns_exceptions():
    outcomes = await gather_in_processes(math.sqrt, [9.0, -1.0], workers=2)
    assert outcomes[0] == 3.0
    assert isinstance(outcomes[1], ValueError)
