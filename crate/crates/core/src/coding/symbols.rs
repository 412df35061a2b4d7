use serde::{Deserialize, Serialize};

/// A simulation symbol: either a data payload or the back symbol `BK`.
///
/// The rewind engine uses `Data(0)` and `Data(1)`; the chunked engine packs a
/// whole subtree serialization into one payload.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Sym {
    Data(u32),
    Back,
}

impl Sym {
    pub fn is_back(self) -> bool {
        matches!(self, Sym::Back)
    }
}

/// Cancel every `BK` together with the closest surviving data symbol before
/// it. Returns `None` when some prefix holds more `BK`s than data symbols.
pub fn parse(x: &[Sym]) -> Option<Vec<u32>> {
    let mut out = Vec::with_capacity(x.len());
    for s in x {
        match *s {
            Sym::Data(v) => out.push(v),
            Sym::Back => {
                out.pop()?;
            }
        }
    }
    Some(out)
}

/// Length of `parse(x)` without building it.
pub fn parse_len(x: &[Sym]) -> Option<usize> {
    let mut len = 0usize;
    for s in x {
        match s {
            Sym::Data(_) => len += 1,
            Sym::Back => len = len.checked_sub(1)?,
        }
    }
    Some(len)
}

/// Maps symbols with `width`-bit payloads onto tree-code child indices:
/// `Data(v)` is child `v`, `BK` is child `2^width`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SymbolCodec {
    pub width: u32,
}

impl SymbolCodec {
    pub fn new(width: u32) -> Self {
        assert!(width < 32, "payload width {width} too large");
        Self { width }
    }

    pub fn arity(&self) -> u32 {
        (1u32 << self.width) + 1
    }

    pub fn child(&self, s: Sym) -> u32 {
        match s {
            Sym::Data(v) => {
                debug_assert!(v < (1 << self.width));
                v
            }
            Sym::Back => 1 << self.width,
        }
    }

    pub fn symbol(&self, child: u32) -> Sym {
        if child == 1 << self.width {
            Sym::Back
        } else {
            Sym::Data(child)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Sym::{Back as B, Data as D};

    #[test]
    fn worked_examples() {
        let x = [D(0), D(0), B, D(1), D(1), B, B, D(1), D(0)];
        assert_eq!(parse(&x), Some(vec![0, 1, 0]));
        assert_eq!(parse(&[D(1), B, B, D(0), D(0), D(1)]), None);
        assert_eq!(parse(&[]), Some(vec![]));
        assert_eq!(parse(&[B]), None);
    }

    #[test]
    fn codec_round_trip() {
        let c = SymbolCodec::new(1);
        assert_eq!(c.arity(), 3);
        for s in [D(0), D(1), B] {
            assert_eq!(c.symbol(c.child(s)), s);
        }
    }
}
