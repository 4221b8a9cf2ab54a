#![no_main]
use epibeds::io::parse_tau_grid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(grid) = parse_tau_grid(text) {
        assert!(!grid.is_empty());
        assert!(grid.iter().all(|&t| t >= 1));
        assert!(grid.windows(2).all(|w| w[0] < w[1]));
    }
});
