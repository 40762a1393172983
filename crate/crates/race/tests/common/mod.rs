//! Random loop programs for the equivalence tests.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const VARS: [&str; 3] = ["i", "j", "k"];

struct Gen {
    rng: ChaCha8Rng,
    depth: usize,
}

impl Gen {
    fn subscript(&mut self, level: usize) -> String {
        let v = VARS[level];
        match self.rng.gen_range(-1i32..=1) {
            0 => v.to_string(),
            o if o > 0 => format!("{}+{}", v, o),
            o => format!("{}{}", v, o),
        }
    }

    fn leaf(&mut self) -> String {
        let r = self.rng.gen_range(0..100);
        if r < 55 {
            let name = *["a", "b"].choose(&mut self.rng).unwrap();
            let subs: Vec<String> = (0..self.depth).map(|l| self.subscript(l)).collect();
            format!("{}({})", name, subs.join(","))
        } else if r < 68 {
            format!("c({})", self.subscript(0))
        } else if r < 76 && self.depth > 1 {
            format!("e({})", self.subscript(self.depth - 1))
        } else if r < 90 {
            ["p", "q"].choose(&mut self.rng).unwrap().to_string()
        } else {
            ["0.5", "2", "3", "1.5"].choose(&mut self.rng).unwrap().to_string()
        }
    }

    fn expr(&mut self, depth: usize) -> String {
        if depth <= 1 || self.rng.gen_bool(0.25) {
            return self.leaf();
        }
        let r = self.rng.gen_range(0..100);
        if r < 8 {
            let f = ["sin", "cos", "exp"].choose(&mut self.rng).unwrap();
            return format!("{}({})", f, self.expr(depth - 1));
        }
        if r < 16 {
            let c = ["2", "4", "0.5"].choose(&mut self.rng).unwrap();
            return format!("({})/{}", self.expr(depth - 1), c);
        }
        let op = match r {
            16..=55 => "+",
            56..=75 => "-",
            _ => "*",
        };
        let l = self.expr(depth - 1);
        let rhs = self.expr(depth - 1);
        if self.rng.gen_bool(0.3) {
            format!("({}{}{})", l, op, rhs)
        } else if op == "*" {
            format!("({})*({})", l, rhs)
        } else {
            format!("{}{}{}", l, op, rhs)
        }
    }
}

/// A perfect nest of 1 to 3 loops with 1 to 3 assignments whose expression
/// trees are at most 6 deep. Inputs are read at offsets -1..1, outputs are
/// written at the current iteration only.
pub fn random_program(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let depth = rng.gen_range(1..=3);
    let statements = rng.gen_range(1..=3);
    let mut g = Gen { rng, depth };
    let full = |lo: &str, hi: &str| vec![format!("{}:{}", lo, hi); depth].join(",");
    let mut s = String::from("PARAM p, q\n");
    s += &format!("REAL a({}), b({}), c(0:n+1)", full("0", "n+1"), full("0", "n+1"));
    if depth > 1 {
        s += ", e(0:n+1)";
    }
    s += "\n";
    let outs: Vec<String> = (0..statements).map(|k| format!("o{}", k)).collect();
    s += &format!("REAL {}\n", outs.iter().map(|o| format!("{}({})", o, full("1", "n"))).collect::<Vec<_>>().join(", "));
    for l in (0..depth).rev() {
        s += &format!("{}DO {} = 1, n\n", "  ".repeat(depth - 1 - l), VARS[l]);
    }
    let pad = "  ".repeat(depth);
    for o in &outs {
        let e = g.expr(6);
        s += &format!("{}{}({}) = {}\n", pad, o, VARS[..depth].join(","), e);
    }
    for l in 0..depth {
        s += &format!("{}ENDDO\n", "  ".repeat(depth - 1 - l));
    }
    s
}
