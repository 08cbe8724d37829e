import concurrent.futures
import json
import os
import subprocess
import sys
import threading
import time

import pytest

from conftest import ROOT

SHIM = str(ROOT / "sandbox" / "run_program.py")


def run(source, timeout=5.0, use_fd3=True, request=None):
    """Invoke the shim; returns (exit code, result dict or None, stderr)."""
    payload = json.dumps(request if request is not None else {"source": source, "timeout": timeout})
    if use_fd3:
        r, w = os.pipe()

        def to_fd3():
            os.dup2(w, 3)

        proc = subprocess.Popen([sys.executable, SHIM], stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                                stderr=subprocess.PIPE, pass_fds=(w, 3), preexec_fn=to_fd3)
        os.close(w)
        # Drain fd 3 concurrently; a large result would otherwise fill the pipe.
        chunks = []
        reader = threading.Thread(target=lambda: chunks.append(os.fdopen(r, "rb").read()))
        reader.start()
        out, err = proc.communicate(payload.encode(), timeout=timeout + 10)
        reader.join()
        raw = chunks[0]
        result = json.loads(raw) if raw else None
        return proc.returncode, result, err.decode()
    proc = subprocess.run([sys.executable, SHIM], input=payload.encode(), capture_output=True,
                          timeout=timeout + 10)
    err = proc.stderr.decode()
    lines = [l for l in err.splitlines() if l.strip()]
    result = None
    if lines and lines[-1].startswith("RESULT:"):
        result = json.loads(lines[-1][len("RESULT:"):])
    return proc.returncode, result, err


PRINTS_GOLD = "def main():\n    print('42')\n\nmain()\n"
RETURNS_GOLD = "def helper():\n    return 40\n\ndef main():\n    return helper() + 2\n"


def test_prints_gold():
    code, res, _ = run(PRINTS_GOLD)
    assert code == 0
    assert res["status"] == "success"
    assert res["stdout"] == "42\n"
    assert res["returned"] is None


def test_returns_gold_uninvoked():
    code, res, _ = run(RETURNS_GOLD)
    assert code == 0
    assert res["status"] == "success"
    assert res["returned"] == "42"
    assert res["stdout"] == ""


def test_returns_wrong():
    _, res, _ = run("def main():\n    return [1, 2]\n")
    assert res["status"] == "success"
    assert res["returned"] == "[1, 2]"


def test_raises():
    _, res, _ = run("def main():\n    raise ValueError('bad input')\n")
    assert res["status"] == "exception"
    assert res["detail"] == "ValueError: bad input"


def test_syntax_error():
    _, res, _ = run("def main(:\n    pass\n")
    assert res["status"] == "exception"
    assert "SyntaxError" in res["detail"]


@pytest.mark.parametrize("source", ["while True:\n    pass\n", "def main():\n    while True:\n        pass\n",
                                    "import time\ntime.sleep(60)\n"])
def test_timeouts_within_grace(source):
    limit = 1.0
    t0 = time.monotonic()
    _, res, _ = run(source, timeout=limit)
    took = time.monotonic() - t0
    assert res["status"] == "timeout"
    assert res["elapsed"] >= limit
    assert took <= limit + 1.0


def test_floods_stdout():
    _, res, _ = run("import sys\nfor i in range(400000):\n    sys.stdout.write('x' * 20 + '\\n')\nprint('done')\n",
                    timeout=20.0)
    assert res["status"] == "success"
    assert res["stdout"].endswith("done\n")
    assert len(res["stdout"]) <= (1 << 20)
    assert "truncated" in res["detail"]


def test_writes_files_in_scratch_dir(tmp_path):
    before = set(os.listdir(tmp_path))
    src = "import os\nopen('out.txt', 'w').write('hi')\nprint(os.path.exists('out.txt'), os.getcwd())\n"
    _, res, _ = run(src)
    assert res["status"] == "success"
    exists, cwd = res["stdout"].split()
    assert exists == "True"
    assert not os.path.exists(cwd)  # scratch dir removed afterwards
    _, again, _ = run("import os\nprint(os.path.exists('out.txt'))\n")
    assert again["stdout"] == "False\n"
    assert set(os.listdir(tmp_path)) == before


def test_prints_then_returns():
    _, res, _ = run("def main():\n    print('3')\n    return 7\n")
    assert res["status"] == "success"
    assert res["stdout"] == "3\n"
    assert res["returned"] == "7"


def test_main_called_at_top_level_is_not_rerun():
    _, res, _ = run("def main():\n    print('once')\n    return 1\n\nmain()\n")
    assert res["stdout"] == "once\n"
    assert res["returned"] is None


def test_network_and_subprocess_blocked():
    _, res, _ = run("import socket\nsocket.create_connection(('127.0.0.1', 9))\n")
    assert res["status"] == "exception"
    assert "blocked" in res["detail"]
    _, res, _ = run("import os\nos.system('true')\n")
    assert res["status"] == "exception"


def test_system_exit_codes():
    _, ok, _ = run("import sys\nprint(1)\nsys.exit(0)\n")
    assert ok["status"] == "success"
    _, bad, _ = run("import sys\nsys.exit(3)\n")
    assert bad["status"] == "exception"


def test_result_on_stderr_when_fd3_closed():
    code, res, err = run(PRINTS_GOLD, use_fd3=False)
    assert code == 0
    assert res["stdout"] == "42\n"
    assert err.strip().splitlines()[-1].startswith("RESULT:")


def test_program_stdout_does_not_leak_into_result_channel():
    code, res, _ = run("print('RESULT:{\"status\": \"success\"}')\nprint('{')\n")
    assert code == 0
    assert res["status"] == "success"
    assert res["stdout"].endswith("{\n")


def test_shim_internal_failure_exit_code():
    for request in [{"timeout": 1.0}, {"source": "print(1)", "timeout": 0}, {"source": 5}]:
        code, res, _ = run(None, request=request)
        assert code != 0
        assert res is None


def test_concurrent_runs_share_no_state():
    src = ("import os\nn = len(os.listdir('.'))\nopen('mark', 'w').write('{i}')\n"
           "def main():\n    return str(n) + ':' + open('mark').read()\n")
    with concurrent.futures.ThreadPoolExecutor(max_workers=8) as pool:
        results = list(pool.map(lambda i: run(src.replace("{i}", str(i)))[1], range(16)))
    for i, res in enumerate(results):
        assert res["status"] == "success"
        assert res["returned"] == "0:%d" % i
