#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(g) = llcg::graph::parse_graph(data) {
        let mut out = Vec::new();
        llcg::graph::write_graph(&g, &mut out).unwrap();
        assert_eq!(llcg::graph::parse_graph(&out).unwrap(), g);
    }
});
