"""Regenerate the bundled simulation configs under src/shrinkcount/configs."""

from pathlib import Path

OUT = Path(__file__).resolve().parents[1] / "src" / "shrinkcount" / "configs"
SHAPES = ("skew", "flat", "bell")

BINOMIAL_ZERO = [(0.01, 0.05), (0.01, 0.10), (0.30, 0.50)]
BINOMIAL_MEAN = [(0.01, 0.05), (0.08, 0.20), (0.31, 0.35)]
ZIB = [((0.01, 0.05), (0.10, 0.14)), ((0.04, 0.06), (0.20, 0.30)),
       ((0.15, 0.30), (0.04, 0.06)), ((0.05, 0.06), (0.20, 0.70))]
BETABIN = [((0.05, 0.10), (4, 6)), ((0.12, 0.22), (2, 5)),
           ((0.17, 0.22), (3, 8)), ((0.05, 0.06), (2, 10))]


def tag(x):
    return f"{x:g}".replace("0.", "0").replace(".", "")


def write(name, **kv):
    lines = [f"name = {name}"] + [f"{k} = {v}" for k, v in kv.items()]
    (OUT / f"{name}.cfg").write_text("\n".join(lines) + "\n")


def main():
    OUT.mkdir(exist_ok=True)
    common = dict(I=10, N=40, n=50, V=10, seed=1)
    for a, b in BINOMIAL_ZERO:
        for s in SHAPES:
            write(f"table1_{s}_{tag(a)}_{tag(b)}", family="binomial", shape=s, a=a, b=b,
                  penalties="pen1, pen2, pen3, pen4", K=500, **common)
    for a, b in BINOMIAL_MEAN:
        for s in SHAPES:
            write(f"table2_{s}_{tag(a)}_{tag(b)}", family="binomial", shape=s, a=a, b=b,
                  penalties="mean-l2, mean-q2", K=500, **common)
    for fam, rows, t in (("zib", ZIB, 3), ("betabin", BETABIN, 4)):
        for (a, b), (a2, b2) in rows:
            for s in SHAPES:
                write(f"table{t}_{s}_{tag(a)}_{tag(b)}_{tag(a2)}_{tag(b2)}", family=fam, shape=s,
                      a=a, b=b, a2=a2, b2=b2, penalties="pen2, mean-l2, full", K=500, **common)

    # reduced-K runs used by the acceptance suite
    write("table1_row_flat_001_005", family="binomial", shape="flat", a=0.01, b=0.05,
          penalties="pen2", K=100, **common)
    write("table2_row_bell_031_035", family="binomial", shape="bell", a=0.31, b=0.35,
          penalties="mean-l2", K=100, **common)
    write("table3_row_bell_005_006", family="zib", shape="bell", a=0.05, b=0.06, a2=0.20, b2=0.70,
          penalties="pen2, mean-l2, full", K=50, **common)
    # same row with the bounds read as bounds on p, pi recovered as p / (1 - gamma)
    write("table3_row_bell_005_006_psample", family="zib", shape="bell", a=0.05, b=0.06, a2=0.20, b2=0.70,
          zib_primary="p", penalties="pen2, mean-l2, full", K=50, **common)
    write("table4_row_bell_005_006", family="betabin", shape="bell", a=0.05, b=0.06, a2=2, b2=10,
          penalties="pen2, mean-l2, full", K=50, **common)
    write("smoke", family="binomial", shape="bell", a=0.31, b=0.35, penalties="mean-l2", K=1,
          I=10, N=40, n=50, V=10, seed=1)


if __name__ == "__main__":
    main()
