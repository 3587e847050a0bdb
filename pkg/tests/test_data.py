import gzip
import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparsepg import data


class TestGenerateLasso:
    def test_ground_truth_support_size(self):
        _, x0 = data.generate_lasso(d=1000, m=50, sparsity=0.99, noise_std=0.01, seed=0)
        assert np.count_nonzero(x0) == 10

    def test_zero_noise_zero_truth(self):
        ds, x0 = data.generate_lasso(d=5, m=4, sparsity=1.0, noise_std=0.0, seed=1)
        assert np.count_nonzero(x0) == 0
        assert np.all(ds.y == 0)

    def test_deterministic(self):
        a = data.generate_lasso(d=20, m=10, sparsity=0.9, noise_std=0.1, seed=7)
        b = data.generate_lasso(d=20, m=10, sparsity=0.9, noise_std=0.1, seed=7)
        assert np.array_equal(a[0].X, b[0].X)
        assert np.array_equal(a[0].y, b[0].y)
        assert np.array_equal(a[1], b[1])

    def test_model_consistency(self):
        ds, x0 = data.generate_lasso(d=8, m=6, sparsity=0.5, noise_std=0.0, seed=2)
        assert ds.X @ x0 == pytest.approx(ds.y)

    @pytest.mark.parametrize("bad", [
        dict(d=0, m=1, sparsity=0.5, noise_std=0.1, seed=0),
        dict(d=1, m=1, sparsity=1.5, noise_std=0.1, seed=0),
        dict(d=1, m=1, sparsity=0.5, noise_std=-1, seed=0),
    ])
    def test_validation(self, bad):
        with pytest.raises(ValueError):
            data.generate_lasso(**bad)

    @settings(max_examples=30, deadline=None)
    @given(d=st.integers(1, 40), sparsity=st.floats(0, 1))
    def test_support_count_exact(self, d, sparsity):
        _, x0 = data.generate_lasso(d=d, m=3, sparsity=sparsity, noise_std=0.0, seed=0)
        assert np.count_nonzero(x0) == int(round((1 - sparsity) * d))


class TestParseLibsvm:
    def test_basic_line(self):
        ds = data.parse_libsvm("+1 1:0.5 3:2\n")
        assert (ds.n, ds.d) == (1, 3)
        assert ds.X.toarray().ravel() == pytest.approx([0.5, 0.0, 2.0])
        assert ds.y == pytest.approx([1.0])

    def test_zero_label_maps_to_minus_one(self):
        ds = data.parse_libsvm("0 2:1\n")
        assert ds.y == pytest.approx([-1.0])

    def test_n_features_override(self):
        ds = data.parse_libsvm("1 1:1\n", n_features=5)
        assert ds.d == 5

    def test_bad_token(self):
        with pytest.raises(data.LibSVMFormatError) as err:
            data.parse_libsvm("1 1:1\n-1 2:x\n")
        assert err.value.line_no == 2

    def test_non_increasing_indices(self):
        with pytest.raises(data.LibSVMFormatError) as err:
            data.parse_libsvm("1 3:1 2:1\n")
        assert err.value.line_no == 1

    def test_zero_based_index_rejected(self):
        with pytest.raises(data.LibSVMFormatError):
            data.parse_libsvm("1 0:1\n")

    def test_gzip_path(self, tmp_path):
        path = tmp_path / "toy.txt.gz"
        with gzip.open(path, "wt") as fh:
            fh.write("1 1:2.5\n-1 2:1\n")
        ds = data.parse_libsvm(str(path))
        assert (ds.n, ds.d) == (2, 2)

    def test_stream_input(self):
        ds = data.parse_libsvm(io.StringIO("1 1:1\n"))
        assert ds.n == 1

    def test_round_trip(self):
        rng = np.random.default_rng(0)
        X = rng.standard_normal((6, 4)) * (rng.random((6, 4)) > 0.4)
        y = rng.choice([-1.0, 1.0], 6)
        ds = data.Dataset(X=X, y=y)
        back = data.parse_libsvm(data.to_libsvm(ds), n_features=4)
        assert np.asarray(back.X.todense()) == pytest.approx(X)
        assert back.y == pytest.approx(y)


class TestSharding:
    def test_even_split(self):
        ds, _ = data.generate_lasso(d=3, m=10, sparsity=0.5, noise_std=0.0, seed=0)
        plan = data.shard_even(ds, 5, seed=1)
        sizes = np.bincount(plan.assignment)
        assert list(sizes) == [2, 2, 2, 2, 2]
        assert plan.alphas == pytest.approx([0.2] * 5)

    def test_remainder_rule(self):
        ds, _ = data.generate_lasso(d=3, m=7, sparsity=0.5, noise_std=0.0, seed=0)
        plan = data.shard_even(ds, 2, seed=1)
        assert sorted(np.bincount(plan.assignment)) == [3, 4]
        assert plan.alphas.sum() == pytest.approx(1.0)

    def test_too_many_workers(self):
        ds, _ = data.generate_lasso(d=3, m=4, sparsity=0.5, noise_std=0.0, seed=0)
        with pytest.raises(ValueError):
            data.shard_even(ds, 5, seed=0)

    @settings(max_examples=30, deadline=None)
    @given(n=st.integers(1, 60), M=st.integers(1, 8), seed=st.integers(0, 100))
    def test_partition_property(self, n, M, seed):
        if M > n:
            return
        ds, _ = data.generate_lasso(d=2, m=n, sparsity=0.5, noise_std=0.0, seed=0)
        plan = data.shard_even(ds, M, seed=seed)
        # disjoint shards covering everything, sizes within 1
        all_idx = np.concatenate([plan.indices(w) for w in range(M)])
        assert sorted(all_idx) == list(range(n))
        sizes = np.bincount(plan.assignment, minlength=M)
        assert sizes.max() - sizes.min() <= 1
        assert plan.alphas.sum() == pytest.approx(1.0)

    def test_shards_preserve_rows(self):
        ds, _ = data.generate_lasso(d=4, m=9, sparsity=0.5, noise_std=0.1, seed=3)
        plan = data.shard_even(ds, 3, seed=4)
        shards = data.make_shards(ds, plan, "least_squares")
        for w, shard in enumerate(shards):
            idx = plan.indices(w)
            assert np.array_equal(shard.A, ds.X[idx])
            assert np.array_equal(shard.b, ds.y[idx])


class TestScaling:
    def test_max_abs_scaling(self):
        ds = data.Dataset(X=np.array([[2.0, 0.0], [-4.0, 0.0]]), y=np.array([1.0, -1.0]))
        scaled = data.scale_features(ds)
        assert np.abs(scaled.X).max(axis=0) == pytest.approx([1.0, 0.0])

    def test_sparse_scaling(self):
        import scipy.sparse as sp
        X = sp.csr_matrix(np.array([[2.0, 1.0], [0.0, -5.0]]))
        scaled = data.scale_features(data.Dataset(X=X, y=np.array([1.0, 1.0])))
        assert np.abs(scaled.X.toarray()).max(axis=0) == pytest.approx([1.0, 1.0])
