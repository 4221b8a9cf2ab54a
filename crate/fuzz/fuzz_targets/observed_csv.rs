#![no_main]
use epibeds::io::{read_observed_csv, write_observed_csv};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = read_observed_csv(data) else {
        return;
    };
    assert!(table.series.days.windows(2).all(|w| w[0] < w[1]));
    assert_eq!(table.series.days[0], 0);

    let mut out = Vec::new();
    write_observed_csv(&table, &mut out).expect("writing to memory");
    let again = read_observed_csv(out.as_slice()).expect("written table reads back");
    assert_eq!(again.series, table.series);
    assert_eq!(again.origin, table.origin);
});
