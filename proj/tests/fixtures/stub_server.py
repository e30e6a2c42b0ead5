#!/usr/bin/env python3
"""Line-delimited JSON stub server for the backend adapter tests."""
import json
import sys

for line in sys.stdin:
    req = json.loads(line)
    if req.get("op") == "generate":
        prompt = req.get("prompt", "")
        if "OVERFLOW" in prompt:
            resp = {"error": {"kind": "context_overflow", "message": "prompt too long"}}
        else:
            words = prompt.split()
            last = words[-1] if words else ""
            resp = {"text": "echo %d last=%s" % (req.get("seed", 0), last)}
    elif req.get("op") == "predict":
        resp = {"proba": 1.0 if "attack" in req.get("text", "") else 0.25}
    else:
        resp = {"error": {"kind": "bad_op", "message": "unknown op"}}
    sys.stdout.write(json.dumps(resp) + "\n")
    sys.stdout.flush()
