from __future__ import annotations

import sys
from pathlib import Path

import pytest

from tabstages.codegen import CodeCell, initial_code
from tabstages.errors import InfrastructureError, ProtocolError, TableStatusError
from tabstages.kernel import (
    ExecOutcome,
    KernelConfig,
    LocalSession,
    RetryPolicy,
    start_session,
    stringify_cell,
)
from tabstages.stages import StageId
from tabstages.tables import Table, to_markdown

STUB = str(Path(__file__).parent / "stub_kernel.py")


def _cell(code: str, stage: StageId = StageId.REASONING, index: int = 1) -> CodeCell:
    return CodeCell(stage=stage, source_text=code, operation_index=index)


def test_retry_policy_bounds():
    assert RetryPolicy().up_limit == 3
    with pytest.raises(ValueError):
        RetryPolicy(up_limit=-1)


def test_exec_outcome_error_requires_message():
    with pytest.raises(ValueError):
        ExecOutcome(ok=False, error="  ")


def test_stringify_cell_rules():
    assert stringify_cell(2.0) == "2"
    assert stringify_cell(2.5) == "2.5"
    assert stringify_cell(None) == ""
    assert stringify_cell(float("nan")) == ""
    assert stringify_cell("text") == "text"
    assert stringify_cell(7) == "7"


class TestLocalSession:
    def test_silent_success(self):
        session = LocalSession()
        outcome = session.execute_cell(_cell("x = 1"))
        assert outcome.ok and outcome.stdout == ""

    def test_stdout_capture(self):
        session = LocalSession()
        outcome = session.execute_cell(_cell("print(42)"))
        assert outcome.ok and outcome.stdout == "42\n"

    def test_runtime_error_message_names_class_and_line(self):
        session = LocalSession()
        outcome = session.execute_cell(_cell("y = 0\nz = 1 / y"))
        assert not outcome.ok
        assert "ZeroDivisionError" in outcome.error
        assert "line 3" in outcome.error  # header comment is line 1
        assert "1 / y" in outcome.error

    def test_syntax_error_message(self):
        session = LocalSession()
        outcome = session.execute_cell(_cell("def broken(:"))
        assert not outcome.ok
        assert outcome.error.startswith("SyntaxError")

    def test_namespace_persists_across_cells(self):
        session = LocalSession()
        assert session.execute_cell(_cell("x = 41")).ok
        outcome = session.execute_cell(_cell("print(x + 1)"))
        assert outcome.stdout == "42\n"

    def test_status_after_init_matches_ingested_rendering(self, medal_table):
        session = LocalSession()
        assert session.execute_cell(initial_code(medal_table)).ok
        assert session.current_table_status() == to_markdown(medal_table)

    def test_status_after_filter_matches_hand_derived(self, medal_table):
        session = LocalSession()
        session.execute_cell(initial_code(medal_table))
        assert session.execute_cell(_cell("df = df[df['Gold'] == '40']")).ok
        expected = to_markdown(
            Table(
                columns=medal_table.columns,
                rows=(medal_table.rows[0], medal_table.rows[1]),
            )
        )
        assert session.current_table_status() == expected

    def test_status_after_type_cleaning_drops_float_suffix(self, medal_table):
        session = LocalSession()
        session.execute_cell(initial_code(medal_table))
        assert session.execute_cell(_cell("df['Gold'] = df['Gold'].astype(float)")).ok
        status = session.current_table_status()
        assert "| 40 |" in status.split("\n")[2]
        assert "40.0" not in status

    def test_status_missing_frame(self):
        session = LocalSession()
        session.execute_cell(_cell("x = 1"))
        with pytest.raises(TableStatusError, match="table object missing"):
            session.current_table_status()

    def test_status_missing_after_del(self, medal_table):
        session = LocalSession()
        session.execute_cell(initial_code(medal_table))
        session.execute_cell(_cell("del df"))
        with pytest.raises(TableStatusError):
            session.current_table_status()

    def test_digest_tracks_variables_and_cells(self, medal_table):
        session = LocalSession()
        session.execute_cell(initial_code(medal_table))
        _, digest_before = session.status_snapshot()
        session.execute_cell(_cell("note = 'hi'"))
        _, digest_after = session.status_snapshot()
        assert digest_before != digest_after

    def test_replay_equals_fresh_session(self, medal_table):
        cells = (
            initial_code(medal_table),
            _cell("df = df[df['Gold'] == '40']"),
        )
        dirty = LocalSession()
        for cell in cells:
            assert dirty.execute_cell(cell).ok
        failed = dirty.execute_cell(_cell("sentinel = 1\nraise ValueError('x')", index=2))
        assert not failed.ok
        dirty.restart_and_replay(cells)

        fresh = LocalSession()
        for cell in cells:
            assert fresh.execute_cell(cell).ok
        assert dirty.status_snapshot() == fresh.status_snapshot()

    def test_rejected_cell_state_is_invisible(self, medal_table):
        session = LocalSession()
        cells = (initial_code(medal_table),)
        session.execute_cell(cells[0])
        session.execute_cell(_cell("sentinel = 1\n1/0"))
        session.restart_and_replay(cells)
        probe = session.execute_cell(_cell("print('sentinel' in dir())"))
        assert probe.stdout == "False\n"

    def test_empty_code_base_replay_is_fresh(self):
        session = LocalSession()
        session.execute_cell(_cell("x = 1"))
        session.restart_and_replay(())
        with pytest.raises(TableStatusError):
            session.current_table_status()

    def test_prefix_determinism_after_replay(self, medal_table):
        cells = (initial_code(medal_table),)
        replayed = LocalSession()
        replayed.execute_cell(cells[0])
        replayed.execute_cell(_cell("1/0"))
        replayed.restart_and_replay(cells)
        fresh = LocalSession()
        fresh.execute_cell(cells[0])
        probe = "print(len(df))"
        assert replayed.execute_cell(_cell(probe)).stdout == fresh.execute_cell(_cell(probe)).stdout

    def test_replay_divergence_is_infrastructure(self):
        session = LocalSession()
        bad = (_cell("undefined_name"),)
        with pytest.raises(InfrastructureError, match="diverged"):
            session.restart_and_replay(bad)

    def test_program_output_by_stage(self):
        session = LocalSession()
        session.execute_cell(_cell("print('working')", stage=StageId.REASONING))
        final = CodeCell(stage=StageId.FINAL_ANSWERING, source_text="print('Paris')")
        session.execute_cell(final)
        assert session.program_output(StageId.FINAL_ANSWERING) == "Paris"
        assert session.program_output(StageId.REASONING) == "working"

    def test_program_output_concatenates_lines(self):
        session = LocalSession()
        for text in ("a", "b"):
            session.execute_cell(
                CodeCell(stage=StageId.FINAL_ANSWERING, source_text=f"print('{text}')")
            )
        assert session.program_output(StageId.FINAL_ANSWERING) == "a\nb"

    def test_program_output_empty_when_nothing_printed(self):
        session = LocalSession()
        session.execute_cell(
            CodeCell(stage=StageId.FINAL_ANSWERING, source_text="x = 1")
        )
        assert session.program_output(StageId.FINAL_ANSWERING) == ""

    def test_failed_cell_stdout_not_logged(self):
        session = LocalSession()
        outcome = session.execute_cell(
            CodeCell(stage=StageId.FINAL_ANSWERING, source_text="print('partial')\n1/0")
        )
        assert not outcome.ok and outcome.stdout == "partial\n"
        assert session.program_output(StageId.FINAL_ANSWERING) == ""


def _stub_config(*args: str, cell_timeout: float = 5.0) -> KernelConfig:
    return KernelConfig(
        command=(sys.executable, STUB, *args),
        cell_timeout=cell_timeout,
        startup_timeout=10.0,
    )


class TestSubprocessSession:
    def test_handshake_version_1(self):
        session = start_session(_stub_config())
        try:
            outcome = session.execute_cell(_cell("PRINT:hi"))
            assert outcome.ok and outcome.stdout == "hi\n"
        finally:
            session.close()

    def test_handshake_rejects_other_versions(self):
        with pytest.raises(InfrastructureError, match="handshake"):
            start_session(_stub_config("2"))

    def test_missing_executable_names_path(self):
        config = KernelConfig(command=("/no/such/kernel-binary",))
        with pytest.raises(InfrastructureError, match="/no/such/kernel-binary"):
            start_session(config)

    def test_exec_error_passthrough(self):
        session = start_session(_stub_config())
        try:
            outcome = session.execute_cell(_cell("BOOM"))
            assert not outcome.ok
            assert "RuntimeError: boom" in outcome.error
        finally:
            session.close()

    def test_timeout_reports_and_forces_restart(self):
        session = start_session(_stub_config(cell_timeout=0.4))
        outcome = session.execute_cell(_cell("SLEEP"))
        assert not outcome.ok and outcome.error == "execution timeout"
        # the timed-out runtime is untrusted: plain requests now fail...
        with pytest.raises(ProtocolError):
            session.current_table_status()
        # ...until restart_and_replay brings up a fresh process
        session.restart_and_replay((_cell("PRINT:x"),))
        assert session.execute_cell(_cell("PRINT:y")).ok
        session.close()

    def test_crash_surfaces_as_transport_error_and_replay_recovers(self):
        session = start_session(_stub_config())
        journal = (_cell("PRINT:a", stage=StageId.FINAL_ANSWERING),)
        assert session.execute_cell(journal[0]).ok
        outcome = session.execute_cell(_cell("DIE"))
        assert not outcome.ok
        assert "transport" in outcome.error
        session.restart_and_replay(journal)
        assert session.program_output(StageId.FINAL_ANSWERING) == "a"
        session.close()

    def test_protocol_desync_is_infrastructure_for_status(self):
        session = start_session(_stub_config())
        outcome = session.execute_cell(_cell("GARBAGE"))
        assert not outcome.ok and "transport" in outcome.error
        session.close()

    def test_status_and_missing_table_mapping(self):
        session = start_session(_stub_config())
        markdown, digest = session.status_snapshot()
        assert markdown.startswith("| stub |")
        assert digest
        session.execute_cell(_cell("DELDF"))
        with pytest.raises(TableStatusError):
            session.current_table_status()
        session.close()

    def test_replay_divergence_raises(self):
        session = start_session(_stub_config())
        with pytest.raises(InfrastructureError, match="diverged"):
            session.restart_and_replay((_cell("BOOM"),))
