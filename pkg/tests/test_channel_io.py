import pytest
import os
import sys
import json
import numpy as np

# Add the src directory to the path so we can import modules
sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '../')))

from src.channel import InclusionCertificate, PureChannel, bsc, identity, validate
from src.channel_io import (
    certificate_from_dict,
    certificate_to_dict,
    dump_certificate,
    dump_channel,
    load_certificate,
    load_channel,
    parse_channel,
)
from src.errors import ParseError


class TestParseChannel:
    """Test suite for channel parsing"""

    def test_json(self):
        k = parse_channel('{"rows": 2, "cols": 2, "p": [[0.9, 0.1], [0.1, 0.9]]}')
        assert k.allclose(bsc(0.1))

    def test_json_without_shape_keys(self):
        k = parse_channel('{"p": [[1.0]]}')
        assert k.shape == (1, 1)

    def test_csv(self):
        k = parse_channel("0.9,0.1\n0.1, 0.9\n\n", fmt="csv")
        assert k.allclose(bsc(0.1))

    def test_csv_ragged_reports_line(self):
        with pytest.raises(ParseError) as exc_info:
            parse_channel("0.5,0.5\n1.0\n", fmt="csv", path="k.csv")
        assert exc_info.value.line == 2
        assert "k.csv:2" in str(exc_info.value)

    def test_csv_non_numeric(self):
        with pytest.raises(ParseError):
            parse_channel("0.5,abc\n", fmt="csv")

    def test_invalid_json(self):
        with pytest.raises(ParseError) as exc_info:
            parse_channel('{"p": [[1.0]]', path="k.json")
        assert exc_info.value.path == "k.json"

    def test_missing_matrix(self):
        with pytest.raises(ParseError):
            parse_channel('{"rows": 1}')

    def test_declared_shape_mismatch(self):
        with pytest.raises(ParseError):
            parse_channel('{"rows": 3, "p": [[0.5, 0.5]]}')

    def test_not_stochastic_becomes_parse_error(self):
        with pytest.raises(ParseError):
            parse_channel('{"p": [[0.5, 0.4]]}')

    def test_unknown_format(self):
        with pytest.raises(ValueError):
            parse_channel("", fmt="xml")


class TestFiles:
    """Test suite for reading and writing files"""

    def test_channel_json_file(self, tmp_path):
        k = validate([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
        path = tmp_path / "k.json"
        dump_channel(k, path)
        assert json.loads(path.read_text())["cols"] == 3
        assert load_channel(path).allclose(k, tol=1e-15)

    def test_channel_csv_file(self, tmp_path):
        k = validate([[1 / 3, 2 / 3], [0.1, 0.9]])
        path = tmp_path / "k.csv"
        dump_channel(k, path)
        assert load_channel(path).allclose(k, tol=1e-15)

    def test_missing_file(self, tmp_path):
        with pytest.raises(OSError):
            load_channel(tmp_path / "absent.json")

    def test_certificate_file(self, tmp_path):
        cert = InclusionCertificate(
            (4, 9), [0.25, 0.75], residual_inf=1e-13,
            pairs=((identity(2), PureChannel(2, 2, (1, 0))), (identity(2), identity(2))),
        )
        path = tmp_path / "cert.json"
        dump_certificate(cert, path)
        loaded = load_certificate(path)
        assert loaded.atom_indices == (4, 9)
        assert np.allclose(loaded.weights, [0.25, 0.75])
        assert loaded.residual_inf == pytest.approx(1e-13)
        assert np.array_equal(loaded.pairs[0][1].p, [[0, 1], [1, 0]])


class TestCertificateDict:
    """Test suite for certificate dictionaries"""

    def test_nan_residual_is_null(self):
        data = certificate_to_dict(InclusionCertificate((0,), [1.0]))
        assert data["residual_inf"] is None
        assert data["pairs"] == []

    def test_missing_indices_default_to_range(self):
        cert = certificate_from_dict({"weights": [0.5, 0.5]})
        assert cert.atom_indices == (0, 1)
        assert np.isnan(cert.residual_inf)

    def test_malformed(self):
        with pytest.raises(ParseError):
            certificate_from_dict({"pairs": []})

    def test_mismatched_pairs(self):
        with pytest.raises(ParseError):
            certificate_from_dict({"weights": [1.0], "atom_indices": [0, 1]})
