use ibcast::coding::{
    build_bsc_code, build_gv_code, majority_decode, majority_error_exact, parse, parse_len, rho_error_bound, Sym,
    SymbolCodec, TreeCode, TreeCodeOptions,
};
use proptest::prelude::*;

fn sym() -> impl Strategy<Value = Sym> {
    prop_oneof![3 => (0u32..2).prop_map(Sym::Data), 1 => Just(Sym::Back)]
}

/// A parseable string built as data symbols with some of them rewound.
fn parseable() -> impl Strategy<Value = Vec<Sym>> {
    prop::collection::vec(sym(), 0..40).prop_map(|raw| {
        let mut out = Vec::new();
        let mut depth = 0usize;
        for s in raw {
            match s {
                Sym::Back if depth == 0 => {}
                Sym::Back => {
                    depth -= 1;
                    out.push(s);
                }
                Sym::Data(_) => {
                    depth += 1;
                    out.push(s);
                }
            }
        }
        out
    })
}

fn small_tree() -> TreeCode {
    let opts = TreeCodeOptions { symbols: Some(16), depth: Some(7), ..TreeCodeOptions::default() };
    TreeCode::build(3, 0.5, 4, 21, opts).unwrap()
}

proptest! {
    #[test]
    fn parse_length_law(x in parseable()) {
        let backs = x.iter().filter(|s| s.is_back()).count();
        let out = parse(&x).expect("built parseable");
        prop_assert_eq!(out.len(), x.len() - 2 * backs);
        prop_assert_eq!(parse_len(&x), Some(out.len()));
    }

    #[test]
    fn appending_back_keeps_nonempty_parses_parseable(x in parseable()) {
        if parse_len(&x).unwrap() > 0 {
            let mut y = x.clone();
            y.push(Sym::Back);
            prop_assert!(parse(&y).is_some());
        }
    }

    #[test]
    fn parse_agrees_with_its_length(x in prop::collection::vec(sym(), 0..30)) {
        prop_assert_eq!(parse(&x).map(|v| v.len()), parse_len(&x));
    }

    #[test]
    fn codec_is_a_bijection(width in 1u32..8, child in 0u32..300) {
        let c = SymbolCodec::new(width);
        let child = child % c.arity();
        prop_assert_eq!(c.child(c.symbol(child)), child);
    }

    #[test]
    fn tree_decode_matches_exhaustive(path in prop::collection::vec(0u32..3, 1..7), noise in prop::collection::vec((0usize..7, 0u32..16), 0..4)) {
        let tc = small_tree();
        let mut y = tc.encode(&path).unwrap();
        prop_assert_eq!(tc.decode(&y).unwrap(), path.clone());
        for (i, v) in noise {
            let i = i % y.len();
            y[i] = v;
        }
        prop_assert_eq!(tc.decode(&y).unwrap(), tc.decode_exhaustive(&y).unwrap());
    }

    #[test]
    fn majority_recovers_light_noise(bit in 0u8..2, len in 1usize..12, flips in prop::collection::vec(any::<bool>(), 23)) {
        let n = 2 * len + 1;
        let mut word = vec![bit; n];
        let mut flipped = 0;
        for (b, f) in word.iter_mut().zip(&flips) {
            if *f && flipped < len {
                *b ^= 1;
                flipped += 1;
            }
        }
        prop_assert_eq!(majority_decode(&word).unwrap(), bit);
    }

    #[test]
    fn exact_majority_error_respects_the_bound(eps in 0.0f64..0.5, half in 0u32..20) {
        let rho = 2 * half + 1;
        prop_assert!(majority_error_exact(eps, rho) <= rho_error_bound(eps, rho) + 1e-12);
    }

    #[test]
    fn bsc_code_round_trips(msg in 0u64..64, seed in 0u64..4) {
        let code = build_bsc_code(6, 40, seed).unwrap();
        prop_assert_eq!(code.decode(&code.encode(msg)), msg);
    }
}

#[test]
fn gv_code_meets_its_distance() {
    let code = build_gv_code(3, 0.1, Some(12), 5).unwrap();
    assert!(f64::from(code.min_distance()) > code.distance_threshold());
    for m in 0..8u8 {
        let bits = vec![m >> 2 & 1, m >> 1 & 1, m & 1];
        assert_eq!(code.decode(&code.encode(&bits)), bits);
    }
}
