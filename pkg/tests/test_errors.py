"""Exit-code contract of the error hierarchy."""

import multiknock as mk


def test_exit_codes():
    assert mk.MultiknockError("x").exit_code == 2
    assert mk.DataError("x").exit_code == 2
    assert mk.DimensionError("x").exit_code == 2
    assert mk.ConfigError("x").exit_code == 2
    assert mk.FormatError("x").exit_code == 65
    assert mk.ParseError("x").exit_code == 65
    assert mk.SchemaError("x").exit_code == 65
    assert mk.UsageError("x").exit_code == 64


def test_hierarchy():
    for cls in (mk.DimensionError, mk.DegenerateColumnError,
                mk.BlockSingularityError, mk.ConvergenceError,
                mk.FeasibilityError, mk.AlignmentError, mk.ConfigError):
        assert issubclass(cls, mk.DataError)
    for cls in (mk.ParseError, mk.SchemaError):
        assert issubclass(cls, mk.FormatError)
    for cls in (mk.DataError, mk.FormatError, mk.UsageError):
        assert issubclass(cls, mk.MultiknockError)


def test_convergence_error_payload():
    err = mk.ConvergenceError("stuck", payload={"lambda": 1.0})
    assert err.payload == {"lambda": 1.0}
    assert mk.ConvergenceError("stuck").payload is None
