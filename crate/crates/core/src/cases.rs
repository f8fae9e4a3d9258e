//! Built-in synthetic cases: a trivial two-bus case, a nine-bus two-area case,
//! and a thirty-bus two-section benchmark. All are constructed
//! programmatically, deterministic, and solvable from a flat start.
//!
//! The CLI exposes them as `builtin:two_bus`, `builtin:nine_bus`,
//! `builtin:bench30`; section sets as the same names.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::grid::{
    load_section_config, Branch, Bus, BusType, GenCost, Generator, GridCase, Section,
};

fn bus(id: u32, bus_type: BusType, pd: f64, qd: f64, vm: f64) -> Bus {
    Bus {
        id,
        bus_type,
        pd,
        qd,
        vm,
        va: 0.0,
        vmin: 0.94,
        vmax: 1.06,
    }
}

fn line(from: u32, to: u32, r: f64, x: f64, b: f64) -> Branch {
    Branch {
        from_bus: from,
        to_bus: to,
        r,
        x,
        b,
        rate: 150.0,
        status: true,
    }
}

fn gen(bus: u32, pg: f64, pmin: f64, pmax: f64) -> Generator {
    Generator {
        bus,
        pg,
        qg: 0.0,
        qmax: 150.0,
        qmin: -150.0,
        pmax,
        pmin,
        status: true,
    }
}

/// Slack + one PQ bus joined by a lossless x = 0.1 branch carrying a 50 MW
/// (0.5 p.u.) load.
pub fn two_bus() -> GridCase {
    GridCase {
        base_mva: 100.0,
        buses: vec![
            bus(1, BusType::Slack, 0.0, 0.0, 1.0),
            bus(2, BusType::Pq, 50.0, 0.0, 1.0),
        ],
        branches: vec![line(1, 2, 0.0, 0.1, 0.0)],
        generators: vec![gen(1, 50.0, 0.0, 200.0)],
        gencost: vec![GenCost::DEFAULT],
    }
}

/// Nine buses in two areas: generation on buses 1-3 (left), load on buses 5-9
/// (right) with a single supporting unit on bus 9. The two tie lines
/// (4,5) and (3,6) form the only section; its flow tracks the right-area
/// supply deficit, so re-dispatching the bus-9 unit steers it.
pub fn nine_bus() -> GridCase {
    let buses = vec![
        bus(1, BusType::Slack, 0.0, 0.0, 1.02),
        bus(2, BusType::Pv, 0.0, 0.0, 1.01),
        bus(3, BusType::Pv, 0.0, 0.0, 1.01),
        bus(4, BusType::Pq, 15.0, 3.0, 1.0),
        bus(5, BusType::Pq, 40.0, 10.0, 1.0),
        bus(6, BusType::Pq, 35.0, 8.0, 1.0),
        bus(7, BusType::Pq, 30.0, 6.0, 1.0),
        bus(8, BusType::Pq, 25.0, 5.0, 1.0),
        bus(9, BusType::Pv, 20.0, 4.0, 1.0),
    ];
    let branches = vec![
        line(1, 2, 0.008, 0.08, 0.02),
        line(2, 3, 0.008, 0.08, 0.02),
        line(3, 4, 0.008, 0.08, 0.02),
        line(4, 1, 0.008, 0.08, 0.02),
        line(4, 5, 0.006, 0.06, 0.02),
        line(3, 6, 0.006, 0.06, 0.02),
        line(5, 6, 0.01, 0.1, 0.02),
        line(5, 7, 0.01, 0.1, 0.02),
        line(6, 8, 0.01, 0.1, 0.02),
        line(7, 8, 0.01, 0.1, 0.02),
        line(8, 9, 0.01, 0.1, 0.02),
        line(7, 9, 0.01, 0.1, 0.02),
    ];
    let generators = vec![
        gen(1, 60.0, 10.0, 250.0),
        gen(2, 60.0, 10.0, 200.0),
        gen(3, 50.0, 10.0, 200.0),
        gen(9, 10.0, 0.0, 150.0),
    ];
    let gencost = vec![
        GenCost { alpha: 0.02, beta: 30.0, lambda: 0.0 },
        GenCost { alpha: 0.015, beta: 25.0, lambda: 0.0 },
        GenCost { alpha: 0.02, beta: 28.0, lambda: 0.0 },
        GenCost { alpha: 0.03, beta: 40.0, lambda: 0.0 },
    ];
    GridCase {
        base_mva: 100.0,
        buses,
        branches,
        generators,
        gencost,
    }
}

/// Section set for [`nine_bus`]: the two tie lines with bounds the base case
/// violates from above.
pub fn nine_bus_sections(case: &GridCase) -> (Vec<Section>, String) {
    let text = String::from(
        "version 1\nsection 1 p_min=60 p_max=120 lines=(4,5),(3,6)\n",
    );
    let sections = load_section_config(&text, case).expect("built-in section set is valid");
    (sections, text)
}

/// Thirty-bus benchmark with two monitored corridors.
///
/// Area A (buses 1-15) is generation-rich; area B (16-30) is load-rich and
/// split into sub-areas B1 (16-22) and B2 (23-30). Section 1 is the A->B
/// corridor, section 2 the B1->B2 corridor. Both corridors start above their
/// bounds, and the in-area units on buses 20 and 26 give the dispatcher
/// leverage over them.
pub fn bench30() -> GridCase {
    let mut buses = vec![
        bus(1, BusType::Slack, 0.0, 0.0, 1.03),
        bus(2, BusType::Pv, 0.0, 0.0, 1.02),
        bus(3, BusType::Pq, 12.0, 3.0, 1.0),
        bus(4, BusType::Pq, 10.0, 2.0, 1.0),
        bus(5, BusType::Pv, 0.0, 0.0, 1.02),
        bus(6, BusType::Pq, 14.0, 3.0, 1.0),
        bus(7, BusType::Pq, 10.0, 2.0, 1.0),
        bus(8, BusType::Pv, 0.0, 0.0, 1.01),
        bus(9, BusType::Pq, 12.0, 3.0, 1.0),
        bus(10, BusType::Pq, 8.0, 2.0, 1.0),
        bus(11, BusType::Pv, 0.0, 0.0, 1.01),
        bus(12, BusType::Pq, 10.0, 2.0, 1.0),
        bus(13, BusType::Pq, 12.0, 3.0, 1.0),
        bus(14, BusType::Pq, 8.0, 2.0, 1.0),
        bus(15, BusType::Pq, 10.0, 2.0, 1.0),
    ];
    buses.extend(vec![
        bus(16, BusType::Pq, 18.0, 4.0, 1.0),
        bus(17, BusType::Pq, 16.0, 4.0, 1.0),
        bus(18, BusType::Pq, 14.0, 3.0, 1.0),
        bus(19, BusType::Pq, 20.0, 5.0, 1.0),
        bus(20, BusType::Pv, 0.0, 0.0, 1.01),
        bus(21, BusType::Pq, 16.0, 4.0, 1.0),
        bus(22, BusType::Pq, 14.0, 3.0, 1.0),
        bus(23, BusType::Pq, 16.0, 4.0, 1.0),
        bus(24, BusType::Pq, 18.0, 4.0, 1.0),
        bus(25, BusType::Pq, 14.0, 3.0, 1.0),
        bus(26, BusType::Pv, 0.0, 0.0, 1.01),
        bus(27, BusType::Pq, 18.0, 4.0, 1.0),
        bus(28, BusType::Pq, 14.0, 3.0, 1.0),
        bus(29, BusType::Pq, 12.0, 3.0, 1.0),
        bus(30, BusType::Pq, 12.0, 3.0, 1.0),
    ]);

    let mut branches = Vec::new();
    // area A ring plus chords
    for i in 1..15u32 {
        branches.push(line(i, i + 1, 0.008, 0.08, 0.02));
    }
    branches.push(line(15, 1, 0.008, 0.08, 0.02));
    branches.push(line(1, 8, 0.012, 0.12, 0.02));
    branches.push(line(3, 12, 0.012, 0.12, 0.02));
    branches.push(line(5, 10, 0.012, 0.12, 0.02));
    // A -> B corridor (section 1)
    branches.push(line(13, 16, 0.006, 0.06, 0.02));
    branches.push(line(14, 17, 0.006, 0.06, 0.02));
    branches.push(line(15, 18, 0.006, 0.06, 0.02));
    // B1 ring plus chord
    for i in 16..22u32 {
        branches.push(line(i, i + 1, 0.008, 0.08, 0.02));
    }
    branches.push(line(22, 16, 0.008, 0.08, 0.02));
    branches.push(line(17, 21, 0.012, 0.12, 0.02));
    // B1 -> B2 corridor (section 2)
    branches.push(line(22, 23, 0.007, 0.07, 0.02));
    branches.push(line(21, 24, 0.007, 0.07, 0.02));
    branches.push(line(20, 25, 0.007, 0.07, 0.02));
    // B2 ring plus chord
    for i in 23..30u32 {
        branches.push(line(i, i + 1, 0.008, 0.08, 0.02));
    }
    branches.push(line(30, 23, 0.008, 0.08, 0.02));
    branches.push(line(24, 29, 0.012, 0.12, 0.02));

    let generators = vec![
        gen(1, 80.0, 10.0, 400.0),
        gen(2, 70.0, 10.0, 200.0),
        gen(5, 60.0, 10.0, 200.0),
        gen(8, 50.0, 5.0, 150.0),
        gen(11, 50.0, 5.0, 150.0),
        gen(20, 45.0, 5.0, 180.0),
        gen(26, 35.0, 5.0, 180.0),
    ];
    let gencost = vec![
        GenCost { alpha: 0.02, beta: 30.0, lambda: 0.0 },
        GenCost { alpha: 0.015, beta: 25.0, lambda: 0.0 },
        GenCost { alpha: 0.02, beta: 28.0, lambda: 0.0 },
        GenCost { alpha: 0.03, beta: 35.0, lambda: 0.0 },
        GenCost { alpha: 0.03, beta: 32.0, lambda: 0.0 },
        GenCost { alpha: 0.025, beta: 38.0, lambda: 0.0 },
        GenCost { alpha: 0.025, beta: 36.0, lambda: 0.0 },
    ];
    GridCase {
        base_mva: 100.0,
        buses,
        branches,
        generators,
        gencost,
    }
}

/// Section set for [`bench30`].
pub fn bench30_sections(case: &GridCase) -> (Vec<Section>, String) {
    let text = String::from(
        "version 1\n\
         section 1 p_min=40 p_max=105 lines=(13,16),(14,17),(15,18)\n\
         section 2 p_min=15 p_max=60 lines=(22,23),(21,24),(20,25)\n",
    );
    let sections = load_section_config(&text, case).expect("built-in section set is valid");
    (sections, text)
}

/// Look up a built-in case by name.
pub fn builtin_case(name: &str) -> Option<GridCase> {
    match name {
        "two_bus" => Some(two_bus()),
        "nine_bus" => Some(nine_bus()),
        "bench30" => Some(bench30()),
        _ => None,
    }
}

/// Look up a built-in section config (as text) by name.
pub fn builtin_sections(name: &str) -> Option<String> {
    match name {
        "nine_bus" => Some(nine_bus_sections(&nine_bus()).1),
        "bench30" => Some(bench30_sections(&bench30()).1),
        _ => None,
    }
}
