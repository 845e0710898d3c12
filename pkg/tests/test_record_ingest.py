import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ecgshapegan import record_ingest as ri
from ecgshapegan.errors import (
    AnnotationOutOfRange,
    MalformedHeader,
    MalformedLine,
    NonMonotoneIndex,
    TruncatedData,
    UnsupportedFormat,
)

RECORD_100_HEADER = """\
100 2 360 650000
100.dat 212 200 11 1024 995 -22131 0 MLII
100.dat 212 200 11 1024 1011 20052 0 V5
"""


class TestParseHeader:
    def test_record_100_fields(self):
        h = ri.parse_header(RECORD_100_HEADER)
        assert h.record_name == "100"
        assert h.num_signals == 2
        assert h.sampling_rate_hz == 360.0
        assert h.samples_per_signal == 650000
        assert all(s.format_code == 212 for s in h.signals)
        assert [s.adc_gain for s in h.signals] == [200.0, 200.0]
        assert [s.adc_zero for s in h.signals] == [1024, 1024]

    def test_zero_sample_record_is_valid(self):
        h = ri.parse_header("r 1 360 0\nr.dat 212 1 11 0 0")
        assert h.samples_per_signal == 0

    def test_non_212_format_rejected(self):
        with pytest.raises(UnsupportedFormat):
            ri.parse_header("r 1 360 10\nr.dat 16 1 11 0 0")

    def test_comment_lines_skipped(self):
        h = ri.parse_header("# comment\nr 1 360 4\nr.dat 212 100 11 0 0\n# trailing")
        assert h.record_name == "r"

    def test_gain_with_baseline_and_units(self):
        h = ri.parse_header("r 1 360 4\nr.dat 212 200(1024)/mV 11 0 0")
        assert h.signals[0].adc_gain == 200.0

    @pytest.mark.parametrize(
        "text",
        [
            "",
            "r 1",
            "r x 360 4\nr.dat 212 1 11 0 0",
            "r 0 360 4",
            "r 1 -5 4\nr.dat 212 1 11 0 0",
            "r 2 360 4\nr.dat 212 1 11 0 0",  # missing second signal line
            "r 1 360 4\nr.dat 212 1",
        ],
    )
    def test_malformed_headers(self, text):
        with pytest.raises(MalformedHeader):
            ri.parse_header(text)


class TestFormat212:
    def test_hand_derived_pair(self):
        assert ri.decode_format212(bytes([0x01, 0x00, 0x02]), 1, 2).tolist() == [[1, 2]]

    def test_negative_twos_complement(self):
        assert ri.decode_format212(bytes([0xFF, 0x0F, 0x00]), 1, 2).tolist() == [[-1, 0]]

    def test_all_zero(self):
        assert ri.decode_format212(bytes(3), 1, 2).tolist() == [[0, 0]]

    def test_extremes(self):
        data = ri.encode_format212(np.array([[2047, -2048]]))
        assert ri.decode_format212(data, 1, 2).tolist() == [[2047, -2048]]

    def test_two_channel_interleave(self):
        # frame order is ch0[t], ch1[t], ch0[t+1], ...
        samples = np.array([[1, 3], [2, 4]])
        decoded = ri.decode_format212(ri.encode_format212(samples), 2, 2)
        assert decoded.tolist() == [[1, 3], [2, 4]]

    def test_odd_sample_count(self):
        samples = np.array([[5, -6, 7]])
        decoded = ri.decode_format212(ri.encode_format212(samples), 1, 3)
        assert decoded.tolist() == [[5, -6, 7]]

    def test_truncated(self):
        with pytest.raises(TruncatedData):
            ri.decode_format212(bytes(2), 1, 2)

    def test_out_of_range_encode(self):
        with pytest.raises(ValueError):
            ri.encode_format212(np.array([[2048]]))

    @given(
        st.lists(st.integers(min_value=-2048, max_value=2047), min_size=1, max_size=50),
        st.integers(min_value=1, max_value=3),
    )
    @settings(max_examples=100, deadline=None)
    def test_round_trip_property(self, values, channels):
        n = (len(values) // channels) * channels
        if n == 0:
            return
        samples = np.array(values[:n]).reshape(channels, -1, order="F")
        decoded = ri.decode_format212(
            ri.encode_format212(samples), channels, samples.shape[1]
        )
        assert np.array_equal(decoded, samples)


class TestAnnotationsCsv:
    def test_basic(self):
        anns = ri.parse_annotations_csv("370,N\n650,V")
        assert [(a.sample_index, a.symbol) for a in anns] == [(370, "N"), (650, "V")]

    def test_empty(self):
        assert ri.parse_annotations_csv("") == []

    def test_non_monotone(self):
        with pytest.raises(NonMonotoneIndex):
            ri.parse_annotations_csv("650,V\n370,N")

    @pytest.mark.parametrize("text", ["abc,N", "3,NV", "3", "-1,N", "3,"])
    def test_malformed_lines(self, text):
        with pytest.raises(MalformedLine):
            ri.parse_annotations_csv(text)

    def test_blank_lines_skipped(self):
        assert len(ri.parse_annotations_csv("1,N\n\n2,V\n")) == 2


class TestLoadRecord:
    def _write_triple(self, tmp_path, samples, annotations, gain=200, zero=1024):
        n = samples.shape[1]
        hea = tmp_path / "r.hea"
        hea.write_text(f"r 1 360 {n}\nr.dat 212 {gain} 11 {zero} 0 0 0 MLII\n")
        dat = tmp_path / "r.dat"
        dat.write_bytes(ri.encode_format212(samples))
        csv = tmp_path / "r.csv"
        csv.write_text("".join(f"{i},{s}\n" for i, s in annotations))
        return hea, dat, csv

    def test_millivolt_conversion(self, tmp_path):
        samples = np.array([[1024, 1224, 824, 1024]])
        paths = self._write_triple(tmp_path, samples, [(1, "N")])
        record = ri.load_record(*paths)
        assert np.allclose(record.signals[0], [0.0, 1.0, -1.0, 0.0])
        assert record.annotations[0].symbol == "N"

    def test_zero_sample_record(self, tmp_path):
        paths = self._write_triple(tmp_path, np.zeros((1, 0), dtype=int), [])
        record = ri.load_record(*paths)
        assert record.signals.shape == (1, 0)

    def test_truncated_signal_file(self, tmp_path):
        paths = self._write_triple(tmp_path, np.zeros((1, 4), dtype=int), [])
        paths[1].write_bytes(b"\x00\x00")
        with pytest.raises(TruncatedData):
            ri.load_record(*paths)

    def test_annotation_beyond_record(self, tmp_path):
        paths = self._write_triple(tmp_path, np.zeros((1, 4), dtype=int), [(99, "N")])
        with pytest.raises(AnnotationOutOfRange):
            ri.load_record(*paths)
