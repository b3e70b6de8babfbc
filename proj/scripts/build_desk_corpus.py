#!/usr/bin/env python3
"""Build a small labeled ARM32 corpus by cross-compiling C sources.

Each binary links three translation units compiled by one compiler at one
optimization level, then stripped. Writes OUT/manifest.csv plus
OUT/large/large.elf (about 1 MB) for extraction timing.

Compilers (each used only if found):
  gcc    arm-none-eabi-gcc   (ARM_GCC or /opt/arm-gcc/bin/arm-none-eabi-gcc)
  clang  system clang        (CLANG or clang)
  clang  zig's bundled clang (ZIG or /opt/zig/ziglang/zig)

Sources default to the aws-lc tree inside the cargo registry.
"""

import argparse
import concurrent.futures as cf
import csv
import glob
import hashlib
import os
import re
import shutil
import struct
import subprocess
import sys

SOURCE_GLOBS = [
    "/opt/cargo/registry/src/*/aws-lc-sys-*/aws-lc",
]
DEFINES = [
    "-DOPENSSL_NO_ASM",
    "-DOPENSSL_NO_THREADS_CORRUPT_MEMORY_AND_LEAK_SECRETS_IF_THREADED",
    "-D_POSIX_READER_WRITER_LOCKS",
]


def newlib_include(gcc):
    root = os.path.dirname(os.path.dirname(gcc))
    inc = os.path.join(root, "arm-none-eabi", "include")
    return inc if os.path.isdir(inc) else None


def version_of(cmd):
    try:
        out = subprocess.run(cmd, capture_output=True, text=True, timeout=60).stdout
    except (OSError, subprocess.TimeoutExpired):
        return None
    m = re.search(r"(\d+)\.(\d+)\.(\d+)", out)
    return m.group(1) if m else None


def find_compilers(args):
    comps = []
    gcc = os.environ.get("ARM_GCC", "/opt/arm-gcc/bin/arm-none-eabi-gcc")
    if shutil.which(gcc):
        v = version_of([gcc, "-dumpfullversion"])
        comps.append(dict(name="gcc-" + v, family="gcc", version="gcc-" + v,
                          cmd=[gcc, "-marm", "-march=armv7-a", "-mfloat-abi=soft"]))
    libc = newlib_include(gcc) if shutil.which(gcc) else None
    sysinc = ["-isystem", libc] if libc else []
    clang = os.environ.get("CLANG", "clang")
    if shutil.which(clang):
        v = version_of([clang, "--version"])
        comps.append(dict(name="clang-" + v, family="clang", version="clang-" + v,
                          cmd=[clang, "--target=armv7a-none-eabi", "-marm", "-mfloat-abi=soft"] + sysinc))
    zig = os.environ.get("ZIG", "/opt/zig/ziglang/zig")
    if shutil.which(zig) and not args.no_zig:
        v = version_of([zig, "cc", "--version"])
        comps.append(dict(name="clang-" + v, family="clang", version="clang-" + v,
                          cmd=[zig, "cc", "-target", "arm-freestanding-eabi", "-mcpu=cortex_a8", "-marm",
                               "-mfloat-abi=soft", "-fno-sanitize=all"] + sysinc))
    seen = set()
    out = []
    for c in comps:
        if c["name"] not in seen:
            seen.add(c["name"])
            out.append(c)
    return out


def find_sources(roots):
    files = []
    for root in roots:
        files += sorted(glob.glob(os.path.join(root, "crypto", "**", "*.c"), recursive=True))
    files = [f for f in files if not f.endswith("_test.c") and "/test/" not in f]
    return files


def compile_one(job):
    comp, opt, src, obj, includes = job
    if os.path.exists(obj):
        return obj
    os.makedirs(os.path.dirname(obj), exist_ok=True)
    cmd = comp["cmd"] + [opt, "-w", "-ffunction-sections"] + DEFINES + includes + ["-c", src, "-o", obj + ".tmp"]
    r = subprocess.run(cmd, capture_output=True, env=dict(os.environ, ZIG_GLOBAL_CACHE_DIR=job_cache()))
    if r.returncode != 0:
        return None
    os.replace(obj + ".tmp", obj)
    return obj


def job_cache():
    return os.environ.get("ZIG_GLOBAL_CACHE_DIR", os.path.join(os.environ.get("TMPDIR", "/tmp"), "zig-cache"))


def link(objs, out, lld, extra=()):
    os.makedirs(os.path.dirname(out), exist_ok=True)
    cmd = [lld, "--entry=0", "--unresolved-symbols=ignore-all", "--strip-all", *extra, "-o", out] + objs
    r = subprocess.run(cmd, capture_output=True)
    return r.returncode == 0


def has_code(path):
    """True if a 32-bit little-endian ELF has a non-empty executable section."""
    with open(path, "rb") as f:
        data = f.read()
    if data[:4] != b"\x7fELF" or data[4] != 1:
        return False
    shoff, = struct.unpack_from("<I", data, 32)
    shentsize, shnum = struct.unpack_from("<HH", data, 46)
    for i in range(shnum):
        _, _, flags, _, _, size = struct.unpack_from("<IIIIII", data, shoff + i * shentsize)
        if flags & 0x4 and size > 0:
            return True
    return False


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("out", help="output directory")
    ap.add_argument("--source-root", action="append", help="C source tree with a crypto/ directory")
    ap.add_argument("--bundles", type=int, default=80, help="binaries per (compiler, opt) variant")
    ap.add_argument("--per-binary", type=int, default=3, help="translation units per binary")
    ap.add_argument("--opts", default="-O0,-O2")
    ap.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--no-zig", action="store_true", help="do not use zig's clang")
    ap.add_argument("--objdir", help="object cache (default OUT/obj)")
    ap.add_argument("--no-large", action="store_true", help="skip the ~1 MB timing binary")
    args = ap.parse_args()

    roots = args.source_root or [p for g in SOURCE_GLOBS for p in sorted(glob.glob(g))][:1]
    if not roots:
        sys.exit("no source tree found; pass --source-root")
    lld = shutil.which("ld.lld")
    if not lld:
        sys.exit("ld.lld not found")
    comps = find_compilers(args)
    if len({c["family"] for c in comps}) < 2:
        sys.exit("need both a gcc and a clang ARM compiler, found: %s" % [c["name"] for c in comps])
    opts = args.opts.split(",")
    includes = []
    for r in roots:
        includes += ["-I" + os.path.join(r, "include"), "-I" + r]
    sources = find_sources(roots)
    want = args.bundles * args.per_binary
    out = os.path.abspath(args.out)
    objdir = os.path.abspath(args.objdir) if args.objdir else os.path.join(out, "obj")

    # Compile until enough sources build under every (compiler, opt) pair.
    good = []
    pos = 0
    with cf.ThreadPoolExecutor(max_workers=args.jobs) as pool:
        while len(good) < want and pos < len(sources):
            batch = sources[pos:pos + (want - len(good)) + 8]
            pos += len(batch)
            jobs = {}
            for i, src in enumerate(batch):
                stem = re.sub(r"[^A-Za-z0-9]+", "_", os.path.relpath(src, roots[0]))[:-2]
                for c in comps:
                    for o in opts:
                        obj = os.path.join(objdir, c["name"], o.lstrip("-"), stem + ".o")
                        jobs[(src, c["name"], o)] = pool.submit(compile_one, (c, o, src, obj, includes))
            for src in batch:
                objs = {(c["name"], o): jobs[(src, c["name"], o)].result() for c in comps for o in opts}
                if all(objs.values()):
                    good.append((src, objs))
            print("compiled %d/%d usable sources" % (len(good), want), file=sys.stderr)
    good = good[:want]
    bundles = [good[i:i + args.per_binary] for i in range(0, len(good) - args.per_binary + 1, args.per_binary)]

    rows = []
    for c in comps:
        for o in opts:
            for b, members in enumerate(bundles):
                rel = os.path.join("bin", c["name"], o.lstrip("-"), "b%03d.elf" % b)
                path = os.path.join(out, rel)
                if not os.path.exists(path) and not link([m[1][(c["name"], o)] for m in members], path, lld):
                    continue
                if not has_code(path):  # every member compiled to data only
                    os.remove(path)
                    continue
                rows.append(dict(path=rel, isa="arm32", family=c["family"], version=c["version"], optimization=o))
    with open(os.path.join(out, "manifest.csv"), "w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=["path", "isa", "family", "version", "optimization"])
        w.writeheader()
        w.writerows(rows)

    if not args.no_large:
        big = os.path.join(out, "large", "large.elf")
        if not os.path.exists(big):
            gcc = comps[0]
            objs = []
            total = 0
            o0 = [os.path.join(objdir, gcc["name"], "O0", f) for f in sorted(os.listdir(os.path.join(objdir, gcc["name"], "O0")))]
            for obj in o0:
                if obj.endswith("_bcm.o"):  # amalgamates the other fipsmodule sources
                    continue
                objs.append(obj)
                total += os.path.getsize(obj)
                if total > 2_050_000:
                    break
            link(objs, big, lld, ["--allow-multiple-definition"])

    digests = {}
    for r in rows:
        with open(os.path.join(out, r["path"]), "rb") as fh:
            digests.setdefault(hashlib.sha256(fh.read()).hexdigest(), 0)
    print("wrote %d binaries (%d unique) with %s" % (len(rows), len(digests), ", ".join(c["name"] for c in comps)),
          file=sys.stderr)


if __name__ == "__main__":
    main()
