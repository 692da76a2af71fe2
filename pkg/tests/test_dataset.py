import numpy as np
import pytest

from tlbo.dataset import (
    DatasetFormatError,
    ObservationDataset,
    dataset_to_csv,
    parse_dataset,
    read_dataset,
    write_dataset,
)
from tlbo.space import sample_latin_hypercube


def _data(space, n=6):
    cfgs = sample_latin_hypercube(space, n, 0)
    return ObservationDataset(tuple(cfgs), np.linspace(-1, 1, n) / 3, "t0")


class TestDataset:
    def test_length_mismatch(self, unit1):
        with pytest.raises(ValueError):
            ObservationDataset((unit1.make([0.1]),), np.array([1.0, 2.0]))

    def test_values_read_only(self, unit1):
        d = ObservationDataset((unit1.make([0.1]),), np.array([1.0]))
        with pytest.raises(ValueError):
            d.values[0] = 3

    def test_append(self, unit1):
        d = ObservationDataset((), np.empty(0)).append(unit1.make([0.2]), 1.5)
        assert len(d) == 1 and d.values[0] == 1.5

    def test_roundtrip_exact(self, mixed_space, tmp_path):
        d = _data(mixed_space)
        path = tmp_path / "d.csv"
        write_dataset(path, mixed_space, d, ["task=t0"])
        back = read_dataset(path, mixed_space)
        assert back.configs == d.configs
        assert np.array_equal(back.values, d.values)
        assert path.read_text().startswith("# task=t0\n")
        assert back.task_id == "d"

    def test_column_order_free(self, unit1):
        d = parse_dataset("objective,x\n1.5,0.25\n", unit1)
        assert d.configs[0].values == (0.25,) and d.values[0] == 1.5

    def test_errors_name_line(self, mixed_space):
        text = dataset_to_csv(mixed_space, _data(mixed_space, 2))
        lines = text.splitlines()
        lines[2] = lines[2].replace("gini", "nope").replace("entropy", "nope").replace("log_loss", "nope")
        with pytest.raises(DatasetFormatError, match="line 3"):
            parse_dataset("\n".join(lines), mixed_space)

    def test_out_of_domain(self, unit1):
        with pytest.raises(DatasetFormatError, match="line 2"):
            parse_dataset("x,objective\n1.5,0\n", unit1)

    def test_missing_column(self, unit1):
        with pytest.raises(DatasetFormatError):
            parse_dataset("y,objective\n0.5,0\n", unit1)

    def test_non_finite(self, unit1):
        with pytest.raises(DatasetFormatError):
            parse_dataset("x,objective\n0.5,nan\n", unit1)

    def test_empty(self, unit1, tmp_path):
        with pytest.raises(DatasetFormatError):
            parse_dataset("", unit1)
        p = tmp_path / "e.csv"
        p.write_text("")
        with pytest.raises(DatasetFormatError):
            read_dataset(p, unit1)

    def test_missing_file_names_path(self, unit1, tmp_path):
        with pytest.raises(FileNotFoundError, match="nothere.csv"):
            read_dataset(tmp_path / "nothere.csv", unit1)
