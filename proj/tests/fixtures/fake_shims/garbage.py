import os, sys
sys.stdin.read()
os.write(3, b"{not json")
