import json

import pytest

from bstr.cli import main
from bstr.sim import CSV_COLUMNS, CSV_SCHEMA, Scenario, read_csv

TINY = dict(M=16, U=2, code="regular-64", frames=1, snr_db=[6.0], T=2,
            grouping={"target_L": 2})


@pytest.fixture
def desk(tmp_path):
    p = tmp_path / "desk.json"
    p.write_text(json.dumps(Scenario(**TINY).to_dict()))
    return p


class TestCli:
    def test_simulate_writes_csv(self, tmp_path, desk, monkeypatch):
        monkeypatch.chdir(tmp_path)
        assert main(["simulate", "--config", str(desk), "--seed", "7", "--quiet"]) == 0
        lines = (tmp_path / "ber.csv").read_text().splitlines()
        assert lines[0] == CSV_SCHEMA and lines[1] == ",".join(CSV_COLUMNS)

    def test_window_round_trip(self, tmp_path, desk):
        w = tmp_path / "w.json"
        assert main(["design-window", "--M", "16", "--out", str(w)]) == 0
        out = tmp_path / "r.csv"
        assert main(["simulate", "--config", str(desk), "--window", str(w),
                     "--receivers", "wbstr", "--out", str(out), "--quiet"]) == 0
        rows = read_csv(out)
        assert rows and all(r["status"] == "ok" for r in rows)

    def test_window_size_mismatch(self, tmp_path, desk, capsys):
        w = tmp_path / "w.json"
        main(["design-window", "--M", "32", "--out", str(w)])
        out = tmp_path / "r.csv"
        assert main(["simulate", "--config", str(desk), "--window", str(w),
                     "--receivers", "wbstr", "--out", str(out), "--quiet"]) != 0
        assert "does not match" in capsys.readouterr().err
        assert not out.exists()

    def test_gen_channel(self, tmp_path):
        out = tmp_path / "c.json"
        assert main(["gen-channel", "--M", "32", "--U", "4", "--seed", "1",
                     "--out", str(out)]) == 0
        assert json.loads(out.read_text())["schema"] == "bstr-channel-v1"

    def test_complexity(self, tmp_path, desk, capsys):
        out = tmp_path / "cx.json"
        assert main(["complexity", "--config", str(desk), "--out", str(out)]) == 0
        doc = json.loads(out.read_text())
        assert set(doc["cm"]) == {"mmse_tr", "bstr", "wbstr"}

    def test_selftest(self, capsys):
        assert main(["selftest", "--only", "grid mapping", "bit llrs"]) == 0
        assert "2/2" in capsys.readouterr().out

    def test_usage_errors(self, tmp_path, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["simulate", "--bogus"])
        assert exc.value.code != 0
        bad = tmp_path / "bad.json"
        bad.write_text('{"M": 7}')
        assert main(["simulate", "--config", str(bad)]) != 0
        assert "error" in capsys.readouterr().err
