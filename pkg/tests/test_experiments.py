import numpy as np
import pytest

from src.tools.activations import RELU, SIGMOID, SWISH, TANH, leaky_relu
from src.tools.kernel import min_eigenvalue, ntk_infinite
from src.tools.network import Architecture
from src.utils.datasets import SynthSpec, generate
from src.utils.exceptions import ValidationError
from src.workflows.experiments import (
    SkipConfig,
    convergence_study,
    convergence_summary,
    depth_sweep,
    skip_vector,
)


class TestSkipVector:

    @pytest.mark.parametrize("config, depth, expected", [
        (SkipConfig.NONE, 5, (0, 0, 0)),
        (SkipConfig.ALL, 4, (1, 1)),
        (SkipConfig.FIRST_HALF, 6, (1, 1, 0, 0)),
        (SkipConfig.SECOND_HALF, 6, (0, 0, 1, 1)),
        (SkipConfig.FIRST_HALF, 5, (1, 0, 0)),
        (SkipConfig.SECOND_HALF, 5, (0, 0, 1)),
        (SkipConfig.ALL, 2, ()),
    ])
    def test_layout(self, config, depth, expected):
        assert skip_vector(config, depth) == expected

    def test_parse(self):
        assert SkipConfig.parse("First_Half") is SkipConfig.FIRST_HALF
        with pytest.raises(ValidationError):
            SkipConfig.parse("middle")


class TestDepthSweep:

    def test_rows_and_prefix_reuse(self):
        frame = depth_sweep([TANH], [SkipConfig.ALL, SkipConfig.FIRST_HALF], [3, 4, 5], n=12, d=4, seed=2)
        assert len(frame) == 6
        assert list(frame.columns) == ["kind", "skip_config", "depth", "lambda_min", "trace_over_d", "frobenius"]

        X = generate(SynthSpec(12, 4, seed=2)).X
        direct = min_eigenvalue(ntk_infinite(X, Architecture.uniform(TANH, 4, 1, 4, skip=1)).K)
        row = frame[(frame["skip_config"] == "all") & (frame["depth"] == 4)].iloc[0]
        assert row.lambda_min == pytest.approx(direct, rel=1e-10)

    def test_chain_per_row(self):
        frame = depth_sweep([RELU, SIGMOID], [SkipConfig.NONE], [3, 6], n=32, d=8)
        assert np.all(frame.lambda_min <= frame.trace_over_d * (1 + 1e-12))
        assert np.all(frame.trace_over_d <= frame.frobenius * (1 + 1e-12))

    @pytest.mark.parametrize("depths", [[2, 3], [3, 13], []])
    def test_depth_range(self, depths):
        with pytest.raises(ValidationError):
            depth_sweep([RELU], [SkipConfig.NONE], depths, n=8, d=4)

    @pytest.mark.slow
    def test_depth_trends(self):
        kinds = [RELU, leaky_relu(0.1), SWISH, SIGMOID, TANH]
        frame = depth_sweep(kinds, [SkipConfig.NONE, SkipConfig.ALL], range(3, 11), n=64, d=16, seed=0)

        def curve(kind, skip_config):
            rows = frame[(frame["kind"] == kind.name) & (frame["skip_config"] == skip_config.value)]
            return rows.sort_values("depth").lambda_min.to_numpy()

        for kind in kinds[:3]:
            rising = curve(kind, SkipConfig.ALL)
            assert np.all(np.diff(rising) >= -1e-10 * rising[:-1])
        falling = curve(SIGMOID, SkipConfig.NONE)
        assert np.all(np.diff(falling) <= 1e-10 * falling[:-1])
        for kind in kinds:
            assert np.all(curve(kind, SkipConfig.ALL) >= curve(kind, SkipConfig.NONE) * (1 - 1e-10))

    @pytest.mark.slow
    @pytest.mark.parametrize("kind", [RELU, leaky_relu(0.1), SWISH, SIGMOID, TANH], ids=str)
    def test_second_half_skips_beat_first_half(self, kind):
        frame = depth_sweep([kind], [SkipConfig.FIRST_HALF, SkipConfig.SECOND_HALF], [10], n=64, d=16, seed=0)
        by_config = frame.set_index("skip_config").lambda_min
        assert by_config[SkipConfig.SECOND_HALF.value] >= by_config[SkipConfig.FIRST_HALF.value]


class TestConvergence:

    def test_frame_shape(self):
        frame = convergence_study(TANH, 3, 1, widths=[16, 32], seeds=[0, 1, 2], n=6, d=4)
        assert len(frame) == 6
        assert np.all(frame.rel_error > 0.0)
        summary = convergence_summary(frame)
        assert list(summary.width) == [16, 32]
        assert list(summary.n_seeds) == [3, 3]

    def test_requires_widths_and_seeds(self):
        with pytest.raises(ValidationError):
            convergence_study(TANH, 3, 1, widths=[], seeds=[0])

    @pytest.mark.slow
    def test_tanh_with_skip_converges(self):
        frame = convergence_study(TANH, 3, 1, widths=[64, 256, 1024, 4096], seeds=range(5), n=16, d=8)
        means = convergence_summary(frame).mean_rel_error.to_numpy()
        assert np.all(np.diff(means) < 0.0)
        assert means[-1] <= 0.15

    @pytest.mark.slow
    def test_relu_converges(self):
        frame = convergence_study(RELU, 3, 0, widths=[64, 4096], seeds=range(5), n=16, d=8)
        means = convergence_summary(frame).mean_rel_error.to_numpy()
        assert means[-1] < means[0]
        assert means[-1] <= 0.10
