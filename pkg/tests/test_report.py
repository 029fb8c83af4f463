import csv
import io
import json

import pytest

from tlsfeat import cli
from tlsfeat.report import (Options, analyze_file, bench_csv, bench_table, benchmark,
                            emit_stream_json, format_summary, output_names, run)
from tlsfeat.synth import (TcpConversation, build_certificate, scripted_corpus, tls12_session,
                           tls13_session, tls_record, client_hello, udp_frame, write_pcap)

from conftest import DATA

GOLDEN = DATA / "golden"


def three_sessions(tmp_path, name="three.pcap"):
    chains = [[], [build_certificate(serial=1), build_certificate(serial=2, bits=1024)], []]
    frames, _ = scripted_corpus(3, chains=chains, seed=4)
    return write_pcap(tmp_path / name, frames), chains


def test_three_sessions_two_cert_chain(tmp_path):
    path, chains = three_sessions(tmp_path)
    reports, s = analyze_file(path)
    assert s.tls_stream_count == 3 == len(reports)
    assert s.certificates_seen == 2 == s.certificates_parsed
    assert s.tcp_flow_count == 4
    # stream 1 is the plaintext HTTP conversation
    assert [r.meta.stream_index for r in reports] == [0, 2, 3]


def test_zero_tls_flows(tmp_path):
    frames, _ = scripted_corpus(0)
    path = write_pcap(tmp_path / "plain.pcap", frames)
    code, results, ds = run([path], tmp_path / "out")
    assert code == 0
    assert (tmp_path / "out" / "plain.features.jsonl").read_text() == ""
    assert results[0]["tls_stream_count"] == 0 and ds["tls_stream_count"] == 0


def test_same_pcap_twice_identical_outputs(tmp_path):
    path, _ = three_sessions(tmp_path)
    code, results, ds = run([path, path], tmp_path / "out")
    assert code == 0
    a = (tmp_path / "out" / "three.features.jsonl").read_bytes()
    b = (tmp_path / "out" / "three_2.features.jsonl").read_bytes()
    assert a == b and a
    assert ds["unique_certificates"] == 2 and ds["certificates_seen"] == 4


def test_determinism_across_runs(tmp_path):
    path, _ = three_sessions(tmp_path)
    run([path], tmp_path / "o1")
    run([path], tmp_path / "o2")
    assert (tmp_path / "o1/three.features.jsonl").read_bytes() == \
        (tmp_path / "o2/three.features.jsonl").read_bytes()
    s1 = json.loads((tmp_path / "o1/three.summary.json").read_text())
    s2 = json.loads((tmp_path / "o2/three.summary.json").read_text())
    s1.pop("analysis_time"), s2.pop("analysis_time")
    assert s1 == s2


def test_unreadable_file_continues_and_exit_one(tmp_path):
    path, _ = three_sessions(tmp_path)
    bad = tmp_path / "bad.pcap"
    bad.write_bytes(b"\0" * 40)
    code, results, _ = run([bad, path], tmp_path / "out")
    assert code == 1
    assert "error" in results[0] and results[1]["tls_stream_count"] == 3
    assert (tmp_path / "out" / "three.features.jsonl").exists()


def test_no_inputs_exit_two(tmp_path):
    assert run([], tmp_path)[0] == 2
    assert cli.main(["extract", str(tmp_path / "missing.pcap"), "--out", str(tmp_path)]) == 2
    assert cli.main([]) == 2
    assert cli.main(["extract", "--splt-cap", "0", "x"]) == 2


def test_json_shape(tmp_path):
    path, _ = three_sessions(tmp_path)
    reports, _ = analyze_file(path)
    line = emit_stream_json(reports[1])
    assert "\n" not in line
    d = json.loads(line)
    assert set(d) == {"meta", "stats", "splt", "byte_dist", "tls", "certificates"}
    assert d["tls"]["client_hello"]["sni"] == "s1.example"
    assert len(d["byte_dist"]["counts"]) == 256
    # no retransmissions or truncation here, so SPLT covers every payload byte
    assert sum(d["byte_dist"]["counts"]) == sum(abs(n) for n in d["splt"]["lengths"])
    assert len(d["certificates"]) == 2 and d["tls"]["flags"] == []
    assert "null" not in line


def test_missing_server_hello_omitted_and_truncated(tmp_path):
    conv = TcpConversation().handshake()
    conv.send(0, tls_record(22, client_hello(sni=None), 0x0301)).close()
    reports, _ = analyze_file(write_pcap(tmp_path / "ch.pcap", conv.frames))
    d = json.loads(emit_stream_json(reports[0]))
    assert "server_hello" not in d["tls"] and d["tls"]["flags"] == ["truncated"]
    assert "sni" not in d["tls"]["client_hello"]


def test_tls13_certs_encrypted(tmp_path):
    conv = tls13_session(TcpConversation().handshake()).close()
    reports, s = analyze_file(write_pcap(tmp_path / "t13.pcap", conv.frames))
    assert reports[0].flags == ["certs_encrypted"] and s.certificates_seen == 0
    d = json.loads(emit_stream_json(reports[0]))
    assert d["tls"]["negotiated_version"] == 0x0304


def test_port_reuse_and_ordering(tmp_path):
    frames = []
    a = TcpConversation(start_ns=0)
    tls12_session(a.handshake()).close(rst=True)
    b = TcpConversation(client=("10.0.0.5", 1), start_ns=100)  # interleaved, stays open
    tls12_session(b.handshake())
    c = TcpConversation(start_ns=10**11, isn=(77, 88))  # same 5-tuple as a, new SYN
    tls12_session(c.handshake()).close()
    frames = a.frames + b.frames + c.frames
    reports, s = analyze_file(write_pcap(tmp_path / "reuse.pcap", frames))
    assert [r.meta.stream_index for r in reports] == [0, 1, 2]
    assert s.tcp_flow_count == 3


def test_summary_invariants_and_counters(tmp_path):
    path, _ = three_sessions(tmp_path)
    _, s = analyze_file(path)
    d = s.to_dict()
    assert d["unique_certificates"] <= d["certificates_parsed"] <= d["certificates_seen"]
    assert set(d["errors"]) >= {"malformed_packets", "truncations", "desyncs"}
    assert d["file_bytes"] == path.stat().st_size


def test_output_names():
    assert output_names(["a/x.pcap", "b/x.pcap", "y.cap", "z"]) == ["x", "x_2", "y", "z"]


def test_format_summary(tmp_path):
    path, _ = three_sessions(tmp_path)
    _, results, _ = run([path], tmp_path / "out")
    rows = list(csv.DictReader(io.StringIO(format_summary(results, "csv"))))
    assert rows[0]["tls_stream_count"] == "3"
    table = format_summary(results, "table")
    assert table.splitlines()[0].split()[0] == "pcap_name"


def test_benchmark_rows_and_total(tmp_path):
    p1, _ = three_sessions(tmp_path, "one.pcap")
    p2, _ = three_sessions(tmp_path, "two.pcap")
    rows = benchmark([p1], tmp_path / "b", repeats=1)
    assert len(rows) == 1 and rows[0].mean == rows[0].times[0]
    rows = benchmark([p1, p2], tmp_path / "b", repeats=5)
    assert [len(r.times) for r in rows] == [5, 5]
    assert all(r.mean == pytest.approx(sum(r.times) / 5) for r in rows)
    text = bench_csv(rows)
    total = [r for r in csv.reader(io.StringIO(text)) if r[0] == "Total"][0]
    assert float(total[2]) == pytest.approx(sum(r.mean for r in rows), abs=1e-5)
    assert bench_table(rows).splitlines()[-1].startswith("Total")
    with pytest.raises(ValueError):
        benchmark([p1], tmp_path, repeats=0)


def test_cli_extract_bench_and_summary(tmp_path, capsys):
    path, _ = three_sessions(tmp_path)
    out = tmp_path / "cli"
    assert cli.main(["extract", str(path), "--out", str(out), "--summary", "csv",
                     "--splt-cap", "3", "--pretty"]) == 0
    printed = capsys.readouterr().out
    assert printed.startswith("pcap_name,")
    lines = (out / "three.features.jsonl").read_text().splitlines()
    assert len(lines) == 3
    assert all(len(json.loads(x)["splt"]["lengths"]) <= 3 for x in lines)
    assert (out / "three.summary.json").read_text().startswith("{\n")
    assert cli.main(["extract", str(path), "--out", str(out), "--bench", "--repeats", "2"]) == 0
    assert (out / "bench.csv").read_text().startswith("pcap,repeats")


def test_cli_cert(tmp_path, capsys):
    assert cli.main(["cert", str(DATA / "certs" / "rsa2048.der")]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["public_key_bits"] == 2048 and d["version"] == 3
    junk = tmp_path / "junk.der"
    junk.write_bytes(b"\x30\x05abc")
    assert cli.main(["cert", str(junk)]) == 1


def test_directory_input_and_non_tls_noise(tmp_path):
    d = tmp_path / "in"
    d.mkdir()
    three_sessions(d, "a.pcap")
    write_pcap(d / "b.pcap", [(1, udp_frame("10.0.0.1", "10.0.0.2", 1, 2, b"x"))])
    code, results, ds = run([d], tmp_path / "out")
    assert code == 0 and ds["files"] == 2 and ds["tls_stream_count"] == 3


def test_small_reorder_buffer_option(tmp_path):
    path, _ = three_sessions(tmp_path)
    reports, s = analyze_file(path, Options(reorder_cap=1))
    assert s.tls_stream_count == 3


def test_golden_features(tmp_path):
    frames, _ = scripted_corpus(4, seed=9)
    path = write_pcap(tmp_path / "golden.pcap", frames)
    run([path], tmp_path / "out")
    got = (tmp_path / "out" / "golden.features.jsonl").read_text()
    assert got == (GOLDEN / "golden.features.jsonl").read_text()
