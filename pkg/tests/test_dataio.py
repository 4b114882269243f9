import numpy as np
import pytest

from gcds import dataio as dio


def toy_schema():
    return (
        dio.ColumnSchema("sex", "categorical", "covariate", levels=("F", "I", "M")),
        dio.ColumnSchema("length", "continuous", "covariate"),
        dio.ColumnSchema("rings", "continuous", "response"),
    )


def toy_csv(tmp_path, text, name="toy.csv"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


class TestColumnSchema:
    def test_rejects_bad_kind_role(self):
        with pytest.raises(ValueError):
            dio.ColumnSchema("a", "integer", "covariate")
        with pytest.raises(ValueError):
            dio.ColumnSchema("a", "continuous", "target")

    def test_categorical_needs_unique_levels(self):
        with pytest.raises(ValueError):
            dio.ColumnSchema("a", "categorical", "covariate")
        with pytest.raises(ValueError):
            dio.ColumnSchema("a", "categorical", "covariate", levels=("x", "x"))

    def test_response_must_be_continuous(self):
        with pytest.raises(ValueError):
            dio.ColumnSchema("y", "categorical", "response", levels=("a", "b"))

    def test_width(self):
        c = dio.ColumnSchema("sex", "categorical", "covariate", levels=("F", "I", "M"))
        assert c.width == 1
        e = dio.ColumnSchema(
            "sex", "categorical", "covariate", levels=("F", "I", "M"), encoded=True
        )
        assert e.width == 3


class TestPairedDataset:
    def test_rejects_non_finite(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        with pytest.raises(ValueError, match="non-finite"):
            dio.PairedDataset(np.array([[np.nan]]), np.array([[1.0]]), schema, "t")

    def test_rejects_row_mismatch(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        with pytest.raises(ValueError, match="row counts"):
            dio.PairedDataset(np.zeros((3, 1)), np.zeros((2, 1)), schema, "t")

    def test_rejects_width_mismatch(self):
        with pytest.raises(ValueError):
            dio.PairedDataset(np.zeros((3, 1)), np.zeros((3, 1)), toy_schema(), "t")


class TestLoadCsv:
    def test_round_trip(self, tmp_path):
        text = "sex,length,rings\nF,0.5,10.0\nM,0.25,7.0\nI,0.125,3.0\n"
        path = toy_csv(tmp_path, text)
        ds = dio.load_csv(path, toy_schema())
        assert ds.n == 3 and ds.d == 2 and ds.q == 1
        assert ds.X[0, 0] == 0.0  # index of level F
        assert ds.X[1, 0] == 2.0
        assert ds.provenance == "csv:toy.csv"
        out = str(tmp_path / "back.csv")
        dio.save_csv(ds, out)
        again = dio.load_csv(out, toy_schema())
        assert np.array_equal(again.X, ds.X)
        assert np.array_equal(again.Y, ds.Y)

    def test_bad_cell_reported_with_line_and_column(self, tmp_path):
        text = "sex,length,rings\nF,0.5,10.0\nM,abc,7.0\n"
        path = toy_csv(tmp_path, text)
        with pytest.raises(ValueError, match=r"line 3, column 'length'.*'abc'"):
            dio.load_csv(path, toy_schema())

    def test_non_finite_tokens_rejected(self, tmp_path):
        for token in ("nan", "NaN", "inf", "-inf", "Infinity"):
            text = f"sex,length,rings\nF,{token},10.0\n"
            path = toy_csv(tmp_path, text, name=f"{token.strip('-')}.csv")
            with pytest.raises(ValueError, match="finite"):
                dio.load_csv(path, toy_schema())

    def test_unknown_level_rejected(self, tmp_path):
        path = toy_csv(tmp_path, "sex,length,rings\nQ,0.5,10.0\n")
        with pytest.raises(ValueError, match=r"column 'sex'"):
            dio.load_csv(path, toy_schema())

    def test_header_must_match(self, tmp_path):
        path = toy_csv(tmp_path, "a,b,c\n1,2,3\n")
        with pytest.raises(ValueError, match="header"):
            dio.load_csv(path, toy_schema())

    def test_all_problems_collected(self, tmp_path):
        rows = "\n".join("F,bad,10.0" for _ in range(12))
        path = toy_csv(tmp_path, f"sex,length,rings\n{rows}\n")
        with pytest.raises(ValueError, match=r"\+2 more"):
            dio.load_csv(path, toy_schema())


class TestSchemaSidecar:
    def test_round_trip(self, tmp_path):
        path = str(tmp_path / "schema.json")
        dio.save_schema(toy_schema(), path)
        assert dio.load_schema(path) == toy_schema()


class TestOneHot:
    def test_expands_to_unit_vectors(self, tmp_path):
        text = "sex,length,rings\nF,0.5,10.0\nM,0.25,7.0\nI,0.125,3.0\n"
        ds = dio.load_csv(toy_csv(tmp_path, text), toy_schema())
        wide = dio.one_hot(ds)
        assert wide.d == 4  # 3 indicators + length
        assert np.array_equal(wide.X[:, :3], np.eye(3)[[0, 2, 1]])
        assert np.array_equal(wide.X[:, 3], ds.X[:, 1])
        assert wide.provenance.endswith(":onehot")
        # every row is a unit vector over the indicator block
        assert np.array_equal(wide.X[:, :3].sum(axis=1), np.ones(3))

    def test_ten_level_column(self):
        levels = tuple(f"L{i}" for i in range(10))
        schema = (
            dio.ColumnSchema("cat", "categorical", "covariate", levels=levels),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        X = np.arange(10.0)[:, None]
        Y = np.zeros((10, 1))
        wide = dio.one_hot(dio.PairedDataset(X, Y, schema, "t"))
        assert wide.d == 10
        assert np.array_equal(wide.X, np.eye(10))

    def test_no_categorical_is_an_error(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        ds = dio.PairedDataset(np.zeros((2, 1)), np.zeros((2, 1)), schema, "t")
        with pytest.raises(ValueError):
            dio.one_hot(ds)


class TestSplit:
    def test_sizes_match_floor(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        n = 4177
        rng = np.random.default_rng(0)
        ds = dio.PairedDataset(
            rng.standard_normal((n, 1)), rng.standard_normal((n, 1)), schema, "t"
        )
        train, test = dio.split(ds, 0.9, seed=1)
        assert train.n == 3759 and test.n == 418

    def test_partition_and_determinism(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        X = np.arange(20.0)[:, None]
        ds = dio.PairedDataset(X, X.copy(), schema, "t")
        a_train, a_test = dio.split(ds, 0.75, seed=9)
        b_train, b_test = dio.split(ds, 0.75, seed=9)
        assert np.array_equal(a_train.X, b_train.X)
        assert np.array_equal(a_test.X, b_test.X)
        merged = np.sort(np.concatenate([a_train.X[:, 0], a_test.X[:, 0]]))
        assert np.array_equal(merged, X[:, 0])
        assert not np.array_equal(a_train.X[:, 0], np.arange(15.0))

    def test_bad_fraction(self):
        schema = (
            dio.ColumnSchema("x", "continuous", "covariate"),
            dio.ColumnSchema("y", "continuous", "response"),
        )
        ds = dio.PairedDataset(np.zeros((5, 1)), np.zeros((5, 1)), schema, "t")
        with pytest.raises(ValueError):
            dio.split(ds, 1.5, seed=0)
