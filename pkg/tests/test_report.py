import math

import pytest
from hypothesis import given, strategies as st

from deepshallow.experiment import SummaryRow, TableRow
from deepshallow.report import (DETAIL_HEADERS, SUMMARY_HEADERS, from_csv, render, to_csv)

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)
optional = st.none() | finite
names = st.sampled_from(["A_1", "A_3", "B_5"])
# notes are single-line messages; commas and quotes still need CSV quoting
notes = st.text(st.characters(blacklist_categories=("Cc", "Cs", "Zl", "Zp")), max_size=20)

rows = st.builds(TableRow, network=names, data_source=names,
                 method=st.sampled_from(["sgd", "cg"]), gradient_calls=st.integers(0, 5000),
                 f_init_agg=finite, f_opt_agg=finite, ratio_to_cg=optional,
                 deep_shallow_ratio=optional, f_opt_median=finite, f_opt_mean=finite,
                 failed_seeds=st.integers(0, 15), note=notes)


def example_rows():
    return [
        TableRow("B_1", "B_1", "rmsprop", 2000, 332.2e-3, 0.098e-3, 8.4, None, 0.098e-3, 0.1e-3),
        TableRow("B_1", "B_1", "cg", 821, 332.2e-3, 0.012e-3, None, None, 0.012e-3, 0.013e-3),
        TableRow("B_3", "B_1", "rmsprop", 2000, 237.8e-3, 4.415e-3, 1.05, 59.2, 4.415e-3, 5e-3,
                 failed_seeds=1, note="1 of 15 seeds failed"),
    ]


@given(st.lists(rows, max_size=6))
def test_detail_csv_round_trip(rs):
    assert from_csv(to_csv(rs, "detail")) == rs


def test_summary_csv_round_trip():
    rs = [SummaryRow("A_1", "A_3", "rmsprop", 0.038e-3, 5.368e-3, 141.3),
          SummaryRow("A_1", "A_5", "rmsprop", 0.0, 11.353e-3, None)]
    assert from_csv(to_csv(rs, "summary")) == rs


def test_csv_header_and_version():
    text = to_csv(example_rows())
    assert text.splitlines()[0] == "# deepshallow detail v1"
    with pytest.raises(ValueError):
        from_csv(text.replace("v1", "v9", 1))
    with pytest.raises(ValueError):
        from_csv("network,method\n")


def test_markdown_detail_has_eight_columns():
    md = render(example_rows(), "detail", "md").splitlines()
    assert len(DETAIL_HEADERS) == 8
    for line in md:
        assert line.count("|") == 9
    assert "F_init x 1e-3" in md[0] and "Ratio to CG" in md[0]


def test_values_scaled_by_one_thousand():
    md = render(example_rows(), "detail", "md")
    assert "| 332.2 | 0.098 | 8.40 | -- |" in md
    assert "| 821 | 332.2 | 0.012 | -- | -- |" in md
    assert "| 237.8 | 4.415 | 1.05 | 59.2 |" in md
    # partial failure marker
    assert "RMSprop *" in md


def test_summary_headers():
    txt = render([SummaryRow("A_1", "A_5", "cg", 0.035e-3, 11.353e-3, 324.37)], "summary", "txt")
    for h in ("Data deep -- NN shallow", "Data shallow -- NN deep", "Ratio Deep/Shallow"):
        assert h in txt
    assert "11.353" in txt and "324.4" in txt
    assert len(SUMMARY_HEADERS) == 5


def test_nan_rendered_as_dash():
    r = TableRow("A_1", "A_1", "sgd", 0, math.nan, math.nan)
    assert "| -- | -- |" in render([r], "detail", "md")


def test_unknown_format():
    with pytest.raises(ValueError):
        render(example_rows(), "detail", "html")
