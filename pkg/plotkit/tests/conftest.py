import pytest
from synth import BANDS, METHODS, label, write_perfect_roc, write_roc


@pytest.fixture(scope="session")
def results_dir(tmp_path_factory):
    """A desk-shaped results directory: 6 bands, 4 methods, full ROC
    files except (mWC, first band), which is also the one absent
    localization cell."""
    root = tmp_path_factory.mktemp("results")
    pd_lines = ["method,band_lo,band_hi,pd_at_fpr"]
    loc_lines = ["method,band_lo,band_hi,min,q1,median,q3,max,n"]
    for mi, method in enumerate(METHODS):
        for bi, band in enumerate(BANDS):
            pd = min(1.0, 0.05 + 0.18 * bi + 0.02 * mi)
            pd_lines.append(f"{method},{band[0]!r},{band[1]!r},{pd!r}")
            if method == "mWC" and bi == 0:
                continue
            med = 3.0 - 0.4 * bi + 0.1 * mi
            loc_lines.append(
                f"{method},{band[0]!r},{band[1]!r},{0.1!r},{med - 0.5!r},"
                f"{med!r},{med + 0.6!r},{med + 2.0!r},{40 + bi}"
            )
            roc = root / f"roc_{label(band)}_{method}.csv"
            if method == "uBA" and bi == 5:
                write_perfect_roc(roc)
            else:
                write_roc(roc, shape=2.0 + bi + 0.3 * mi)
    (root / "pd_table.csv").write_text("\n".join(pd_lines) + "\n")
    (root / "locerr.csv").write_text("\n".join(loc_lines) + "\n")
    return root
