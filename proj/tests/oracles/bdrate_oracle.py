"""Classic Bjontegaard delta-rate (cubic fit of log rate over PSNR, integrated
over the overlapping PSNR interval). Prints values frozen into tests."""
import numpy as np


def bd_rate(anchor_rate, anchor_q, test_rate, test_q):
    la, lt = np.log(anchor_rate), np.log(test_rate)
    pa, pt = np.polyfit(anchor_q, la, 3), np.polyfit(test_q, lt, 3)
    lo = max(min(anchor_q), min(test_q))
    hi = min(max(anchor_q), max(test_q))
    ia, it = np.polyint(pa), np.polyint(pt)
    da = np.polyval(ia, hi) - np.polyval(ia, lo)
    dt = np.polyval(it, hi) - np.polyval(it, lo)
    return (np.exp((dt - da) / (hi - lo)) - 1) * 100


CASES = {
    "four_point": ([0.10, 0.18, 0.31, 0.55], [30.1, 32.4, 34.6, 36.9],
                   [0.09, 0.16, 0.29, 0.50], [30.3, 32.5, 34.9, 37.0]),
    "partial_overlap": ([0.05, 0.11, 0.23, 0.47], [28.0, 30.5, 33.2, 35.8],
                        [0.07, 0.14, 0.26, 0.52], [29.4, 31.9, 34.1, 37.2]),
    "six_point": ([0.02, 0.04, 0.08, 0.16, 0.32, 0.64], [26.0, 28.7, 31.1, 33.6, 35.9, 38.0],
                  [0.025, 0.045, 0.085, 0.15, 0.30, 0.58], [26.4, 29.0, 31.3, 33.5, 35.7, 37.6]),
}

if __name__ == "__main__":
    for name, (ar, aq, tr, tq) in CASES.items():
        print(name, repr(bd_rate(np.array(ar), np.array(aq), np.array(tr), np.array(tq))))
