#!/usr/bin/env python3
"""Run one generated program in a child interpreter and report what it did.

stdin:  {"source": str, "timeout": float}
fd 3:   {"status", "stdout", "returned", "elapsed", "detail"}
        (when fd 3 is not open: last stderr line, prefixed "RESULT:")

Exit status is 0 whatever the program does. Confinement is best effort:
a scratch working directory, sockets and process spawning disabled inside
the program. Real isolation needs an OS-level sandbox.
"""

import json
import os
import signal
import subprocess
import sys
import tempfile
import threading
import time

STDOUT_CAP = 1 << 20  # keep the tail; the answer is printed last

# Executed by the child interpreter: argv = [meta_fd, program_path].
CHILD = r'''
import builtins, json, os, sys, traceback

meta = os.fdopen(int(sys.argv[1]), "w")
path = sys.argv[2]
with open(path, encoding="utf-8") as f:
    source = f.read()
os.unlink(path)

def _blocked(*_a, **_k):
    raise PermissionError("blocked by sandbox")

import socket, subprocess
socket.socket = _blocked
socket.create_connection = _blocked
subprocess.Popen = _blocked
for name in ("system", "popen", "fork", "forkpty", "execv", "execve", "execvp",
             "execvpe", "spawnv", "spawnve", "posix_spawn", "posix_spawnp"):
    if hasattr(os, name):
        setattr(os, name, _blocked)

FILENAME = "<program>"
state = {"main_called": False}

def _profile(frame, event, arg):
    if event == "call" and frame.f_code.co_name == "main" \
            and frame.f_code.co_filename == FILENAME:
        state["main_called"] = True

result = {"status": "success", "returned": None, "detail": ""}
namespace = {"__name__": "__main__", "__builtins__": builtins}
try:
    code = compile(source, FILENAME, "exec")
    sys.setprofile(_profile)
    try:
        exec(code, namespace)
    finally:
        sys.setprofile(None)
    main = namespace.get("main")
    if callable(main) and not state["main_called"]:
        value = main()
        if value is not None:
            result["returned"] = str(value)
except SystemExit as e:
    if e.code not in (None, 0):
        result["status"] = "exception"
        result["detail"] = "SystemExit: %s" % (e.code,)
except BaseException as e:
    result["status"] = "exception"
    result["detail"] = "".join(traceback.format_exception_only(type(e), e)).strip()
try:
    sys.stdout.flush()
except BaseException:
    pass
meta.write(json.dumps(result))
meta.close()
'''


def _drain(fd, sink):
    buf = bytearray()
    while True:
        chunk = os.read(fd, 65536)
        if not chunk:
            break
        buf += chunk
        if len(buf) > 2 * STDOUT_CAP:
            del buf[:-STDOUT_CAP]
    os.close(fd)
    if len(buf) > STDOUT_CAP:
        del buf[:-STDOUT_CAP]
        sink["truncated"] = True
    sink["data"] = bytes(buf)


def run_program(source, timeout):
    if not timeout or timeout <= 0:
        raise ValueError("timeout must be positive")
    with tempfile.TemporaryDirectory(prefix="aot-run-") as work:
        program = os.path.join(work, ".program.py")
        with open(program, "w", encoding="utf-8") as f:
            f.write(source)

        meta_r, meta_w = os.pipe()
        out_r, out_w = os.pipe()
        env = {"PATH": os.environ.get("PATH", "/usr/bin:/bin"), "HOME": work,
               "PYTHONIOENCODING": "utf-8", "PYTHONHASHSEED": "0"}
        start = time.monotonic()
        child = subprocess.Popen(
            [sys.executable, "-I", "-c", CHILD, str(meta_w), program],
            stdin=subprocess.DEVNULL, stdout=out_w, stderr=subprocess.DEVNULL,
            pass_fds=(meta_w,), cwd=work, env=env, start_new_session=True)
        os.close(meta_w)
        os.close(out_w)

        out, meta = {}, {}
        readers = [threading.Thread(target=_drain, args=(out_r, out), daemon=True),
                   threading.Thread(target=_drain, args=(meta_r, meta), daemon=True)]
        for t in readers:
            t.start()

        timed_out = False
        try:
            child.wait(timeout=timeout)
        except subprocess.TimeoutExpired:
            timed_out = True
            try:
                os.killpg(child.pid, signal.SIGKILL)
            except ProcessLookupError:
                pass
            child.wait()
        elapsed = time.monotonic() - start
        # Descendants holding the pipes open must not stall the report.
        try:
            os.killpg(child.pid, signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
        for t in readers:
            t.join(timeout=1.0)

    stdout = out.get("data", b"").decode("utf-8", errors="replace")
    if timed_out:
        return {"status": "timeout", "stdout": stdout, "returned": None,
                "elapsed": max(elapsed, timeout), "detail": "timeout after %gs" % timeout}
    try:
        report = json.loads(meta.get("data", b"").decode("utf-8"))
    except ValueError:
        report = {"status": "exception", "returned": None,
                  "detail": "program terminated abnormally (exit %s)" % child.returncode}
    detail = report.get("detail", "")
    if out.get("truncated"):
        detail = (detail + "; " if detail else "") + "stdout truncated"
    return {"status": report["status"], "stdout": stdout, "returned": report.get("returned"),
            "elapsed": elapsed, "detail": detail}


def emit(result):
    line = json.dumps(result)
    try:
        os.fstat(3)
    except OSError:
        sys.stderr.write("RESULT:" + line + "\n")
        sys.stderr.flush()
        return
    with os.fdopen(3, "w", closefd=True) as channel:
        channel.write(line)


def main():
    try:
        request = json.load(sys.stdin)
        source = request["source"]
        timeout = float(request.get("timeout", 10.0))
        if not isinstance(source, str):
            raise TypeError("source must be a string")
        result = run_program(source, timeout)
    except Exception as e:  # shim-internal failure
        sys.stderr.write("run_program: %s\n" % e)
        return 1
    emit(result)
    return 0


if __name__ == "__main__":
    sys.exit(main())
