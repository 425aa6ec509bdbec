#!/usr/bin/env python3
"""End-to-end checks of the califorms CLI: exit codes, key output, schemas.

usage: cli_test.py <califorms binary> <project root>
"""
import json
import subprocess
import sys
import tempfile
from pathlib import Path

import jsonschema

BIN = sys.argv[1]
ROOT = Path(sys.argv[2])
DATA = ROOT / "data"
SCHEMAS = ROOT / "docs" / "schemas"

failures = []


def run(*args, stdin=None):
    p = subprocess.run([BIN, *map(str, args)], capture_output=True, text=True, input=stdin)
    return p.returncode, p.stdout, p.stderr


def check(cond, what):
    print(("ok   " if cond else "FAIL ") + what)
    if not cond:
        failures.append(what)


def validate(doc, schema_name, what):
    schema = json.loads((SCHEMAS / schema_name).read_text())
    try:
        jsonschema.validate(doc, schema)
        check(True, what + " matches " + schema_name)
    except jsonschema.ValidationError as e:
        check(False, what + " matches " + schema_name + ": " + e.message)


ZERO_LINE = "00" * 64
LINE_41 = "41" + "00" * 63

# convert
code, out, _ = run("convert", "--line", ZERO_LINE, "--mask", "0000000000000200")
check(code == 0, "convert exits 0")
check(out.strip().endswith("round-trip OK"), "convert prints round-trip OK")
check(sum(out.startswith(p) or ("\n" + p) in out for p in ("bitvector8", "sentinel", "bitvector4", "bitvector1")) == 4,
      "convert prints four encodings")

code, out, _ = run("convert", "--line", LINE_41, "--mask", "0x0000000000000200", "--format", "json")
doc = json.loads(out)
check(code == 0 and doc["round_trip"]["ok"], "convert json round-trips")
check(doc["sentinel"]["payload"][:2] == "24" and doc["sentinel"]["payload"][18:20] == "41",
      "sentinel header 0x24 with data[0] displaced to byte 9")
validate(doc, "convert.schema.json", "convert output")

code, out, _ = run("convert", "--line", "ff" * 64, "--mask", "ffffffffffffffff", "--format", "json")
doc = json.loads(out)
check(code == 0 and doc["sentinel"]["header"]["count_code"] == 3, "convert all-security line")
validate(doc, "convert.schema.json", "convert all-security output")

code, _, err = run("convert", "--line", "00", "--mask", "0")
check(code == 1 and "128 hex digits" in err, "convert rejects a short line with exit 1")

# analyze
listing = DATA / "structs" / "listing.h"
code, out, _ = run("analyze", listing, "--format", "table")
check(code == 0, "analyze table exits 0")
row = [l for l in out.splitlines() if l.startswith("A ")]
check(len(row) == 1 and "85/88" in row[0] and "[1,3]" in row[0], "analyze table has the 85/88 row")

code, out, _ = run("analyze", listing, "--policy", "intelligent", "--seed", "5", "--max", "5")
doc = json.loads(out)
check(code == 0 and len(doc["structs"][0]["califormed"]["security_spans"]) == 3, "intelligent spans around buf and fp")
validate(doc, "analyze.schema.json", "analyze output")
code, again, _ = run("analyze", listing, "--policy", "intelligent", "--seed", "5", "--max", "5")
check(again == out, "analyze output is byte-identical for a fixed seed")

code, out, _ = run("analyze", DATA / "structs" / "listing.json", "--policy", "full")
validate(json.loads(out), "analyze.schema.json", "analyze json-input output")

code, out, _ = run("analyze", DATA / "structs" / "synthetic.h", "--bins", "10")
doc = json.loads(out)
check(doc["histogram"]["counts"] == [0, 0, 0, 0, 1, 3, 1, 1, 1, 5], "synthetic corpus histogram")

with tempfile.NamedTemporaryFile("w", suffix=".h", delete=False) as f:
    f.write("struct Bad {\n  int x;\n  int y : 4;\n};\n")
code, _, err = run("analyze", f.name)
check(code == 1 and ":3:" in err, "analyze reports bit-field with its line number")
code, _, _ = run("analyze", listing, "--policy", "bogus")
check(code == 1, "unknown policy is a usage error")

# simulate
code, out, _ = run("simulate", DATA / "traces" / "use_after_free.jsonl", "--structs", listing)
doc = json.loads(out)
check(code == 2, "use-after-free trace exits 2")
check(doc["violations_by_kind"] == {"TemporalViolation": 1}, "use-after-free reports TemporalViolation")
validate(doc, "simulate.schema.json", "simulate output")

code, out, _ = run("simulate", DATA / "traces" / "clean.jsonl", "--structs", listing, "--record-loads")
doc = json.loads(out)
check(code == 0 and doc["exceptions"] == [], "clean trace exits 0")
validate(doc, "simulate.schema.json", "simulate --record-loads output")

code, out, _ = run("simulate", DATA / "traces" / "lsq.jsonl", "--strict")
doc = json.loads(out)
check(code == 2 and doc["stopped_early"] and len(doc["exceptions"]) == 1, "strict stops at the first violation")
code, out, _ = run("simulate", DATA / "traces" / "lsq.jsonl")
check(json.loads(out)["violations_by_kind"] == {"LsqViolation": 2}, "lsq trace has two LsqViolations")

code, _, err = run("simulate", DATA / "traces" / "bad_line.jsonl")
check(code == 1 and "bad_line.jsonl:2:" in err, "malformed trace exits 1 with a line number")

code, out, _ = run("simulate", "-", stdin='{"op":"store","addr":"0x40","width":8,"value":"0x1"}\n')
check(code == 0 and json.loads(out)["source"] == "<stdin>", "simulate reads stdin")

trace_schema = json.loads((SCHEMAS / "trace-op.schema.json").read_text())
for t in sorted((DATA / "traces").glob("*.jsonl")):
    if t.name == "bad_line.jsonl":
        continue
    ok = True
    for line in t.read_text().splitlines():
        try:
            jsonschema.validate(json.loads(line), trace_schema)
        except jsonschema.ValidationError:
            ok = False
    check(ok, t.name + " lines match trace-op.schema.json")

# attack
code, out, _ = run("attack", "--pn", "0.1", "--objects", "10", "--trials", "20000", "--seed", "3")
doc = json.loads(out)
check(code == 0 and doc["ci"]["within_3_sigma"], "attack monte carlo within 3 sigma")
check(abs(doc["closed_form"]["scan_survival"] - 0.9 ** 10) < 1e-15, "attack closed form")
validate(doc, "attack.schema.json", "attack output")

code, out, _ = run("attack", "--pn", "0.1", "--objects", "250", "--spans", "3", "--trials", "0")
doc = json.loads(out)
check(doc["closed_form"]["scan_survival"] == 0.9 ** 250 and doc["empirical"] is None, "attack without trials")
check(abs(doc["closed_form"]["guess_success"] - 1 / 343) < 1e-15, "guess success 1/7^3")
validate(doc, "attack.schema.json", "attack --trials 0 output")

code, _, _ = run("attack", "--pn", "1.5")
check(code == 1, "attack rejects P/N outside [0,1]")

# help and usage
code, out, _ = run("--help")
check(code == 0 and all(s in out for s in ("analyze", "simulate", "convert", "attack")), "--help lists subcommands")
for sub, flags in {
    "analyze": ["--policy", "--min", "--max", "--seed", "--bins", "--format"],
    "simulate": ["--structs", "--strict", "--record-loads", "--policy", "--seed", "--min", "--max",
                 "--l1-lines", "--l2-lines", "--quarantine", "--heap-size"],
    "convert": ["--line", "--mask", "--format"],
    "attack": ["--pn", "--objects", "--spans", "--min", "--max", "--trials", "--seed", "--object-size"],
}.items():
    code, out, _ = run(sub, "--help")
    check(code == 0 and all(f in out for f in flags), sub + " --help documents every flag")
code, _, _ = run()
check(code == 1, "no subcommand is a usage error")
code, _, _ = run("teleport")
check(code == 1, "unknown subcommand is a usage error")

print(f"{len(failures)} failure(s)")
sys.exit(1 if failures else 0)
