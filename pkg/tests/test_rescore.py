import numpy as np
import pytest

from csra.errors import ParameterError
from csra.rescore import is_unimodal, lambda_sweep, rescore, rescore_report, resolve_lambda


class TestResolveLambda:
    def test_family_defaults(self):
        assert resolve_lambda(family="resnet") == 0.02
        assert resolve_lambda(family="other") == 0.2

    def test_explicit_wins(self):
        assert resolve_lambda(0.5, "resnet") == 0.5

    def test_missing(self):
        with pytest.raises(ParameterError):
            resolve_lambda()
        with pytest.raises(ParameterError):
            resolve_lambda(family="vit")


class TestRescore:
    def test_arithmetic(self):
        np.testing.assert_allclose(rescore([np.array([[1.0, 2.0, 3.0]])], 0.2), [[2.6]], rtol=1e-15)

    def test_lambda_zero_is_mean(self, rng):
        S = [rng.standard_normal((3, 2, 4)) for _ in range(5)]
        np.testing.assert_allclose(rescore(S, 0.0), [s.reshape(3, -1).mean(axis=1) for s in S],
                                   rtol=1e-14)

    def test_spatial_shapes(self, rng):
        assert rescore([rng.random((4, 2, 3)), rng.random((4, 5))], 1.0).shape == (2, 4)

    def test_report_and_sweep(self, rng):
        S = [rng.standard_normal((2, 6)) for _ in range(8)]
        labels = rng.integers(0, 2, (8, 2))
        labels[0] = 1
        logits, report = rescore_report(S, labels, 0.2, lambdas=[0, 0.2, 1])
        assert logits.shape == (8, 2)
        assert report.extra["lambda"] == 0.2
        assert [r["lambda"] for r in report.extra["sweep"]] == [0, 0.2, 1]
        assert report.extra["sweep"][1]["mAP"] == report.mAP
        assert lambda_sweep(S, labels, [0.2])[0][1] == report.mAP


class TestUnimodal:
    @pytest.mark.parametrize("values, expected", [
        ([1, 2, 3, 2, 1], True),
        ([1, 1, 1], True),
        ([3, 2, 1], True),
        ([1, 2, 3], True),
        ([1, 3, 2, 3], False),
        ([2, 1, 2], False),
    ])
    def test_shapes(self, values, expected):
        assert is_unimodal(values) is expected
