//! Scenario parsing and validation must reject bad input with an error,
//! never a panic, and anything accepted must survive a TOML round trip.

#![no_main]
use epibeds::scenario::{Scenario, ScenarioFile};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    let Ok(file) = ScenarioFile::parse(text) else {
        return;
    };
    let printed = file.to_toml();
    let reparsed = ScenarioFile::parse(&printed).expect("printed scenario parses");
    assert_eq!(reparsed.to_toml(), printed);

    if let Ok(scenario) = file.build() {
        assert_eq!(scenario.names.len(), scenario.regions.len());
        assert!(Scenario::from_toml(&printed).is_ok());
        let _ = scenario.allocation_problem();
        let _ = scenario.fit_spec();
    }
});
