use std::fs;

use choreo::harness::fixtures::{check_fixture, fixtures_dir, load_all};
use choreo::harness::LIBRARY;
use choreo::model::validate_automaton;
use choreo::textio::{parse_automata, parse_network, parse_program, print_network, print_program};

#[test]
fn every_fixture_meets_its_sidecar() {
    let dir = fixtures_dir();
    let all = load_all(&dir).expect("fixtures load");
    assert!(all.len() >= 15, "only {} fixtures", all.len());
    let mut failures = Vec::new();
    for f in &all {
        for problem in check_fixture(f, &dir) {
            failures.push(format!("{}: {problem}", f.name));
        }
    }
    assert!(failures.is_empty(), "{}", failures.join("\n"));
}

#[test]
fn parseable_fixtures_round_trip() {
    let dir = fixtures_dir();
    for f in load_all(&dir).unwrap() {
        if f.meta.parse_error.is_some() {
            continue;
        }
        let p = parse_program(&f.source).unwrap();
        let again = parse_program(&print_program(&p)).unwrap();
        assert_eq!(again, p, "{}", f.name);
    }
}

#[test]
fn library_automata_are_well_formed() {
    let lib = parse_automata(LIBRARY).unwrap();
    let names: Vec<&str> = lib.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(
        names,
        ["Sync", "Async1", "Async2", "SyncMulti2", "SyncMulti3", "Async1Multi2", "Barrier"]
    );
    for (n, a) in &lib {
        assert!(validate_automaton(a).is_empty(), "{n}");
    }
    let on_disk = fs::read_to_string(fixtures_dir().join("library.ca")).unwrap();
    assert_eq!(on_disk, LIBRARY);
}

#[test]
fn golden_network_round_trips() {
    let text = fs::read_to_string(fixtures_dir().join("booksale.cp")).unwrap();
    let n = parse_network(&text).unwrap();
    assert_eq!(parse_network(&print_network(&n)).unwrap(), n);
}
