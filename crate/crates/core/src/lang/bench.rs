//! Generators for the bundled benchmark programs and the test corpus.
//!
//! Every generator is a pure function of its parameters and returns `.cmp`
//! source text.

use std::fmt::Write;

/// Names accepted by [`builtin`], with the parameter each one takes.
pub const BUILTINS: &[(&str, Option<&str>)] = &[
    ("p2wr", None),
    ("wr_chain", Some("n")),
    ("wr_grid", Some("k")),
    ("cyclic3", Some("n")),
    ("withdraw", None),
    ("lastzero", Some("n")),
    ("opt_lock", Some("n")),
];

/// Source of a builtin benchmark. `param` defaults to 2 where one is needed.
pub fn builtin(name: &str, param: Option<u32>) -> Option<String> {
    let n = param.unwrap_or(2);
    Some(match name {
        "p2wr" => wr_grid(2),
        "wr_chain" => wr_chain(n),
        "wr_grid" => wr_grid(n),
        "cyclic3" => cyclic3(n),
        "withdraw" => withdraw(),
        "lastzero" => lastzero(n),
        "opt_lock" => opt_lock(n),
        _ => return None,
    })
}

/// `k` processes, each writing `x` and then reading it.
pub fn wr_grid(k: u32) -> String {
    let mut s = String::from("global x = 0\n");
    for p in 1..=k {
        write!(
            s,
            "\nprocess p{p} {{\n  write x = {p}\n  local r = read x\n}}\n"
        )
        .unwrap();
    }
    s
}

/// Two processes, each writing `x` `n` times and then reading it.
pub fn wr_chain(n: u32) -> String {
    let mut s = String::from("global x = 0\n");
    for p in 1..=2 {
        write!(
            s,
            "\nprocess p{p} {{\n  repeat {n} {{\n    write x = {p}\n  }}\n  local r = read x\n}}\n"
        )
        .unwrap();
    }
    s
}

/// Three processes over `x` and `y` forming a triangle.
pub fn cyclic3(n: u32) -> String {
    let mut s = String::from("global x = 0\nglobal y = 0\n");
    s.push_str("\nprocess p1 {\n  write x = 1\n  local a = read x\n}\n");
    for p in 2..=3 {
        write!(
            s,
            "\nprocess p{p} {{\n  write x = {p}\n  repeat {} {{\n    write y = {p}\n  }}\n  \
             local b = read y\n  local c = read x\n}}\n",
            n + 1
        )
        .unwrap();
    }
    s
}

/// Two concurrent withdrawals from a lock-protected balance.
pub fn withdraw() -> String {
    let mut s = String::from("global balance = 4\nlock l\n");
    for (p, amount) in [(1, 1), (2, 2)] {
        write!(
            s,
            "\nprocess p{p}(amount = {amount}) {{\n  acquire l\n  local v = read balance\n  \
             if v - amount >= 0 {{\n    write balance = v - amount\n  }}\n  release l\n  \
             v = read balance\n}}\n"
        )
        .unwrap();
    }
    s
}

/// One process scanning an array downwards for a zero while `n` writers
/// each set `array[j] = array[j - 1] + 1`.
pub fn lastzero(n: u32) -> String {
    let mut s = format!("global array[{}] = 0\n", n + 1);
    write!(s, "\nprocess reader(i = {n}, v = 0) {{\n").unwrap();
    let mut depth = 1;
    s.push_str("  v = read array[i]\n");
    for _ in 0..n {
        let pad = "  ".repeat(depth);
        write!(
            s,
            "{pad}if v != 0 {{\n{pad}  i = i - 1\n{pad}  v = read array[i]\n"
        )
        .unwrap();
        depth += 1;
    }
    for d in (1..depth).rev() {
        writeln!(s, "{}}}", "  ".repeat(d)).unwrap();
    }
    s.push_str("}\n");
    for j in 1..=n {
        write!(
            s,
            "\nprocess w{j}(v = 0) {{\n  v = read array[{}]\n  write array[{j}] = v + 1\n}}\n",
            j - 1
        )
        .unwrap();
    }
    s
}

/// Two processes optimistically claiming `last_id`, up to `n` attempts each.
pub fn opt_lock(n: u32) -> String {
    let mut s = String::from("global last_id = 0\nglobal x = 0\n");
    for j in 1..=2 {
        write!(s, "\nprocess p{j}(v = 0, r = 0) {{\n").unwrap();
        for a in 0..n {
            let pad = "  ".repeat(a as usize + 1);
            write!(
                s,
                "{pad}write last_id = {j}\n{pad}write x = {j}\n{pad}v = read last_id\n\
                 {pad}if v == {j} {{\n{pad}  r = read x\n{pad}}}"
            )
            .unwrap();
            if a + 1 < n {
                s.push_str(" else {\n");
            } else {
                s.push('\n');
            }
        }
        for a in (0..n.saturating_sub(1)).rev() {
            writeln!(s, "{}}}", "  ".repeat(a as usize + 1)).unwrap();
        }
        s.push_str("}\n");
    }
    s
}

/// Small programs over acyclic architectures: at most three processes and
/// at most eight shared-memory events per process.
pub fn acyclic_corpus() -> Vec<(String, String)> {
    let mut out: Vec<(String, String)> = vec![
        ("p2wr".into(), wr_grid(2)),
        ("wr_chain_2".into(), wr_chain(2)),
        ("wr_chain_3".into(), wr_chain(3)),
        ("withdraw".into(), withdraw()),
        ("opt_lock_1".into(), opt_lock(1)),
        ("opt_lock_2".into(), opt_lock(2)),
    ];
    let extra: &[(&str, &str)] = &[
        (
            "message_passing",
            "global data = 0\nglobal flag = 0\n\n\
             process producer {\n  write data = 42\n  write flag = 1\n}\n\n\
             process consumer(f = 0, d = 0) {\n  f = read flag\n  if f == 1 {\n    \
             d = read data\n    assert d == 42\n  }\n}\n",
        ),
        (
            "store_buffer",
            "global x = 0\nglobal y = 0\n\n\
             process p1 {\n  write x = 1\n  local a = read y\n}\n\n\
             process p2 {\n  write y = 1\n  local b = read x\n}\n",
        ),
        (
            "locked_counter",
            "global c = 0\nlock l\n\n\
             process p1 {\n  repeat 2 {\n    acquire l\n    local v = read c\n    \
             write c = v + 1\n    release l\n  }\n}\n\n\
             process p2 {\n  acquire l\n  local v = read c\n  write c = v + 1\n  release l\n}\n",
        ),
        (
            "racy_counter",
            "global c = 0\n\n\
             process p1 {\n  local v = read c\n  write c = v + 1\n  v = read c\n  \
             assert v >= 1\n}\n\n\
             process p2 {\n  local v = read c\n  write c = v + 1\n}\n",
        ),
        (
            "star",
            "global x = 0\nglobal y = 0\n\n\
             process hub(a = 0, b = 0) {\n  a = read x\n  write y = a + 1\n  b = read y\n  \
             write x = b\n}\n\n\
             process left {\n  write x = 5\n  local u = read x\n}\n\n\
             process right {\n  local u = read y\n  write y = 7\n}\n",
        ),
        (
            "pipeline",
            "global a = 0\nglobal b = 0\n\n\
             process source {\n  write a = 1\n  write a = 2\n}\n\n\
             process relay(v = 0) {\n  v = read a\n  write b = v * 10\n}\n\n\
             process sink(w = 0) {\n  w = read b\n  assert w != 20\n}\n",
        ),
        (
            "array_cells",
            "global a[3] = [0, 1, 2]\n\n\
             process p1(i = 0) {\n  write a[0] = 5\n  i = read a[1]\n  local v = read a[i]\n}\n\n\
             process p2 {\n  write a[1] = 0\n  write a[2] = 9\n}\n",
        ),
        (
            "branchy",
            "global x = 0\nglobal y = 0\n\n\
             process p1(v = 0) {\n  v = read x\n  if v == 0 {\n    write y = 1\n  } else {\n    \
             write y = 2\n  }\n  v = read y\n}\n\n\
             process p2(w = 0) {\n  write x = 1\n  w = read y\n  write x = w\n}\n",
        ),
        (
            "lock_handoff",
            "global x = 0\nlock l\n\n\
             process p1 {\n  acquire l\n  write x = 1\n  write x = 2\n  release l\n}\n\n\
             process p2(a = 0, b = 0) {\n  a = read x\n  acquire l\n  b = read x\n  release l\n  \
             assert a != 1\n}\n",
        ),
        (
            "flags",
            "global f1 = 0\nglobal f2 = 0\nglobal turn = 0\n\n\
             process p1(f = 0, t = 0) {\n  write f1 = 1\n  write turn = 2\n  f = read f2\n  \
             t = read turn\n  if f == 1 && t == 2 {\n    write f1 = 0\n  }\n}\n\n\
             process p2(f = 0, t = 0) {\n  write f2 = 1\n  write turn = 1\n  f = read f1\n  \
             t = read turn\n}\n",
        ),
        (
            "single",
            "global x = 0\n\nprocess solo(v = 0) {\n  write x = 1\n  v = read x\n  \
             write x = v + 1\n}\n",
        ),
        (
            "independent",
            "global x = 0\nglobal y = 0\n\n\
             process p1 {\n  write x = 1\n  local v = read x\n}\n\n\
             process p2 {\n  write y = 1\n  local v = read y\n}\n",
        ),
        (
            "read_only",
            "global x = 3\n\n\
             process p1 {\n  local v = read x\n  v = read x\n}\n\n\
             process p2 {\n  local v = read x\n}\n",
        ),
    ];
    out.extend(extra.iter().map(|(n, s)| (n.to_string(), s.to_string())));
    out
}

/// Programs over cyclic architectures, used where a cyclic reduction is
/// exercised.
pub fn cyclic_corpus() -> Vec<(String, String)> {
    vec![
        ("cyclic3_1".into(), cyclic3(1)),
        ("wr_grid_3".into(), wr_grid(3)),
        ("lastzero_2".into(), lastzero(2)),
        ("lastzero_3".into(), lastzero(3)),
        (
            "triangle_locks".into(),
            "global x = 0\nglobal y = 0\nglobal z = 0\nlock l\n\n\
             process p1(v = 0) {\n  acquire l\n  write x = 1\n  release l\n  v = read z\n}\n\n\
             process p2(v = 0) {\n  v = read x\n  write y = v + 1\n}\n\n\
             process p3(v = 0) {\n  v = read y\n  acquire l\n  write z = v\n  release l\n}\n"
                .into(),
        ),
    ]
}
