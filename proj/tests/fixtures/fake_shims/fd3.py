import json, os, sys
req = json.load(sys.stdin)
print("program output that is not the result")
os.write(3, json.dumps({"status": "success", "stdout": req["source"], "returned": "r",
                        "elapsed": 0.5, "detail": ""}).encode())
