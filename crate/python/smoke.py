"""Smoke test for the Python bindings. Run after building the extension:

    pip install --no-build-isolation -e crates/py
    python python/smoke.py
"""

import math

import bubbleflow_py as bf


def main():
    p = bf.Params()
    d_nom, t_nom = p.nominal()
    assert abs(d_nom - 16.5) < 1e-9 and abs(t_nom - 1.2375) < 1e-9
    assert p.t_iat_override == 1.58
    assert p.validate() == []
    assert bf.Params("paper-table1", exit_len=50.0).validate()
    assert bf.Params("table1-formula").t_iat_override is None
    q = bf.Params(mu=0.2)
    q.w_t = 2.0
    assert q.to_dict()["mu"] == 0.2 and q.w_t == 2.0

    prof = bf.solve_arrival_profile(-120.0, 10.0, 8.0, p)
    dist = 0.0
    v = 10.0
    for dur, acc in prof["segments"]:
        dist += v * dur + 0.5 * acc * dur * dur
        v += acc * dur
    assert abs(dist - 120.0) < 1e-9
    assert abs(v - prof["arrival_speed"]) < 1e-9
    assert v >= p.nu_nom - 1e-9
    assert bf.solve_arrival_profile(-500.0, 0.0, 5.0, p) is None

    entries = [
        (1, 1, 120.0, 0.0, 13.0, 1),
        (2, 2, 90.0, 0.0, 14.0, 2),
        (3, 1, 160.0, 0.0, 12.0, 1),
        (4, 3, 100.0, 4.0, 15.0, 1),
    ]
    a = bf.schedule(entries, p)
    b = bf.brute_force_schedule(entries, p)
    assert math.isclose(a["cost"], b["cost"], rel_tol=1e-9)
    assert sorted(a["order"]) == [1, 2, 3, 4]

    hd = bf.run_simulation(p, mode="hd", seed=1, stop="time:60", trace="hash")
    again = bf.run_simulation(p, mode="hd", seed=1, stop="time:60", trace="hash")
    assert hd["trace_hash"] == again["trace_hash"]
    assert hd["violations"] == []
    assert 0 < hd["cpm"] <= 39
    sig = bf.run_simulation(p, mode="signal", seed=1, stop="cars:20")
    assert sig["tcc"] is not None and sig["crossed"] >= 20

    print(
        f"ok: T_nom={t_nom:.4f} s, B&B cost={a['cost']:.3f}, "
        f"HD CPM={hd['cpm']}, signal TCC(20)={sig['tcc']:.2f} s"
    )


if __name__ == "__main__":
    main()
