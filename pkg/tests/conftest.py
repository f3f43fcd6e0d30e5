"""Shared test helpers."""

import numpy as np
import pytest

from boxdistill.autodiff import GradCheckReport, Tape, finite_difference_check


@pytest.fixture
def gradcheck():
    """Certify the tape gradient of build(tape, leaf) -> scalar node against
    central finite differences, rebuilding the forward pass per probe."""

    def _check(build, x0, tol: float = 1e-4) -> GradCheckReport:
        x0 = np.asarray(x0, dtype=np.float64)
        tape = Tape()
        x = tape.leaf(x0)
        root = build(tape, x)
        analytic = tape.backward(root)[x.index]

        def f(xv):
            probe = Tape()
            return float(build(probe, probe.leaf(xv)).value)

        report = finite_difference_check(f, x0, analytic)
        assert report.max_rel_error < tol, report
        return report

    return _check
