#!/usr/bin/env python3
"""Regenerates the committed .fixture files and corpus manifest from src/*.s.

Needs GNU binutils (as, objcopy, objdump, nm) for i386. Only run when a source changes.

Directives inside a source, one per line:
  #! title <text>
  #! import <library> <function>            -> symbol IAT_<function>
  #! ascii <SYM> "<text>"
  #! utf16 <SYM> "<text>"
  #! hex <SYM> <bytes...>
  #! buffer <SYM> <size>
  #! xor <SYM> <key> "<plain>"               encoded with a single-byte key, NUL included
  #! addrot <SYM> <add> <rot> "<plain>"      e = ror((p - add) & 0xff, rot), NUL included
  #! impl <id> <tactic> <kind> <string|nostring> <start_label> <end_label>
  #! expect <SYM|-> "<plain>"                deobfuscation oracle entry
"""
import pathlib
import re
import shlex
import subprocess
import sys
import tempfile

BASE = 0x401000
DATA = 0x402000
IAT = 0x403000
HERE = pathlib.Path(__file__).resolve().parent


def ror8(v, n):
    return ((v >> n) | (v << (8 - n))) & 0xFF


def escape(text):
    out = []
    for ch in text:
        if ch == '"':
            out.append('\\"')
        elif ch == "\\":
            out.append("\\\\")
        elif 0x20 <= ord(ch) < 0x7F:
            out.append(ch)
        else:
            out.append("\\x%02x" % ord(ch))
    return "".join(out)


def build(src):
    imports, data, impls, expects = [], [], [], []
    title = src.stem
    symbols = {}
    cursor = DATA
    for line in src.read_text().splitlines():
        if not line.startswith("#!"):
            continue
        words = shlex.split(line[2:], posix=True)
        kind, args = words[0], words[1:]
        if kind == "title":
            title = " ".join(args)
        elif kind == "import":
            slot = IAT + 4 * len(imports)
            imports.append((args[0], args[1], slot))
            symbols["IAT_" + args[1]] = slot
        elif kind == "impl":
            impls.append(args)
        elif kind == "expect":
            expects.append((args[0], args[1]))
        else:
            name = args[0]
            if kind == "ascii":
                payload = ("ascii", args[1])
                size = len(args[1]) + 1
            elif kind == "utf16":
                payload = ("utf16", args[1])
                size = 2 * len(args[1]) + 2
            elif kind == "hex":
                raw = bytes(int(b, 16) for b in args[1:])
                payload, size = ("hex", raw), len(raw)
            elif kind == "buffer":
                size = int(args[1], 0)
                payload = ("hex", bytes(size))
            elif kind == "xor":
                key = int(args[1], 0)
                raw = bytes(b ^ key for b in args[2].encode() + b"\0")
                payload, size = ("hex", raw), len(raw)
            elif kind == "addrot":
                add, rot = int(args[1], 0), int(args[2], 0)
                raw = bytes(ror8((b - add) & 0xFF, rot) for b in args[3].encode() + b"\0")
                payload, size = ("hex", raw), len(raw)
            else:
                sys.exit(f"{src}: unknown directive {kind}")
            symbols[name] = cursor
            data.append((cursor, payload))
            cursor = (cursor + size + 15) & ~15

    prelude = ".intel_syntax noprefix\n" + "".join(f".set {k}, 0x{v:X}\n" for k, v in symbols.items())
    with tempfile.TemporaryDirectory() as tmp:
        tmp = pathlib.Path(tmp)
        (tmp / "a.s").write_text(prelude + src.read_text())
        subprocess.run(["as", "--32", "-o", tmp / "a.o", tmp / "a.s"], check=True)
        relocs = subprocess.run(["objdump", "-r", tmp / "a.o"], check=True, capture_output=True, text=True).stdout
        if "R_386" in relocs:
            sys.exit(f"{src}: code needs relocations:\n{relocs}")
        labels = {}
        for row in subprocess.run(["nm", tmp / "a.o"], check=True, capture_output=True, text=True).stdout.splitlines():
            value, typ, name = row.split()
            if typ.lower() == "t":
                labels[name] = BASE + int(value, 16)
        dis = subprocess.run(["objdump", "-d", "-M", "intel", "-w", "-j", ".text", tmp / "a.o"],
                             check=True, capture_output=True, text=True).stdout

    code = []
    for row in dis.splitlines():
        m = re.match(r"^\s+([0-9a-f]+):\t((?:[0-9a-f]{2} )+)\s*\t?(.*)$", row)
        if m:
            text = re.sub(r"\s+", " ", m.group(3)).strip()
            text = re.sub(r"\s*<[^>]*>", "", text)
            text = re.sub(r"^(j\w+|call|loop\w*) ([0-9a-f]+)$", lambda b: f"{b.group(1)} 0x{BASE + int(b.group(2), 16):x}", text)
            code.append((BASE + int(m.group(1), 16), m.group(2).strip(), text))

    out = [f"# {title}", f"base 0x{BASE:X}", f"entry 0x{labels.get('main', BASE):X}"]
    for lib, fn, slot in imports:
        out.append(f"import {lib} {fn} 0x{slot:X}")
    for addr, (kind, value) in data:
        if kind == "hex":
            out.append(f"data_hex 0x{addr:X} " + " ".join(f"{b:02x}" for b in value))
        else:
            out.append(f'data_{kind} 0x{addr:X} "{escape(value)}"')
    for addr, hexbytes, text in code:
        label = [k for k, v in labels.items() if v == addr]
        if label:
            out.append(f"# {label[0]}:")
        out.append(f"code_hex {hexbytes:<24}# {addr:08x}  {text}")
    ranges = [(i, labels[i[4]], labels[i[5]]) for i in impls]
    return "\n".join(out) + "\n", ranges, [(s, p) for s, p in expects]


def main():
    manifest = ["# Ground truth for the fixture corpus. Generated by assemble.py.", ""]
    oracle = ["# fixture<TAB>expected recovered string. Generated by assemble.py from the plaintext directives."]
    for group in ("tada", "benign"):
        for src in sorted((HERE / "src" / group).glob("*.s")):
            text, ranges, expects = build(src)
            target = HERE / group / (src.stem + ".fixture")
            target.write_text(text)
            manifest.append(f"binary {group}/{target.name}")
            for impl, start, end in ranges:
                ident, tactic, kind, strflag = impl[:4]
                manifest.append(f"impl {ident} {tactic} {kind} {strflag} 0x{start:X}-0x{end:X}")
            for _, plain in expects:
                oracle.append(f"{group}/{target.name}\t{plain}")
    (HERE / "corpus.manifest").write_text("\n".join(manifest) + "\n")
    (HERE / "deobfuscation_oracle.tsv").write_text("\n".join(oracle) + "\n")


if __name__ == "__main__":
    main()
