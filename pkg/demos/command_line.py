"""
The command-line front end
==========================

Everything above is also reachable from the ``purikit`` command.  Each
subcommand prints a JSON report with a digest that does not depend on
timing, so runs can be compared byte for byte.
"""

import json
import os
import tempfile
from io import StringIO

from purikit.cli import run


def purikit(*argv):
    out, err = StringIO(), StringIO()
    code = run([str(a) for a in argv], out, err)
    return code, json.loads(out.getvalue()), err.getvalue().strip()


with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "chain3.json")
    purikit("random", "--scenario", "chain", "--parties", 3, "--seed", 4, "--out", path)
    code, report, summary = purikit("compose", path, "--check")
    print(summary)
    print("exit code:", code, "digest:", report["digest"])
    code, report4, _ = purikit("--jobs", 4, "compose", path, "--check")
    print("same digest with 4 jobs:", report4["digest"] == report["digest"])
