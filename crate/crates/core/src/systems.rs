//! Bundled demonstration plants used by the examples, configs and tests.

use nalgebra::dmatrix;

use crate::model::StateSpaceModel;

/// Two-mass spring-damper with force inputs on both masses and the two
/// velocities as outputs, ZOH-discretized at 50 ms.
///
/// Parameters: m1 = m2 = 1, k1 = 4, k2 = 8, b1 = 2, b2 = 4.
pub fn spring_damper() -> StateSpaceModel {
    let (m1, m2) = (1.0, 1.0);
    let (k1, k2) = (4.0, 8.0);
    let (b1, b2) = (2.0, 4.0);
    let ac = dmatrix![
        0.0, 1.0, 0.0, 0.0;
        -(k1 + k2) / m1, -(b1 + b2) / m1, k2 / m1, b2 / m1;
        0.0, 0.0, 0.0, 1.0;
        k2 / m2, b2 / m2, -k2 / m2, -b2 / m2
    ];
    let bc = dmatrix![
        0.0, 0.0;
        1.0 / m1, 0.0;
        0.0, 0.0;
        0.0, 1.0 / m2
    ];
    let c = dmatrix![
        0.0, 1.0, 0.0, 0.0;
        0.0, 0.0, 0.0, 1.0
    ];
    StateSpaceModel::from_continuous(ac, bc, c, 0.05).expect("valid bundled system")
}

/// Second-order MIMO RC network: two input voltages, the two capacitor
/// voltages as outputs, ZOH-discretized at 100 ms.
///
/// R1 = R2 = R3 = 1 kOhm, C1 = 1 uF, C2 = 330 uF.
pub fn rc_circuit() -> StateSpaceModel {
    let (r1, r2, r3) = (1e3, 1e3, 1e3);
    let (c1, c2) = (1e-6, 330e-6);
    let ac = dmatrix![
        -(r1 + r3) / (c1 * r1 * r3), 1.0 / (c1 * r3);
        1.0 / (c2 * r3), -(r2 + r3) / (c2 * r2 * r3)
    ];
    let bc = dmatrix![
        1.0 / (c1 * r1), 0.0;
        0.0, 1.0 / (c2 * r2)
    ];
    let c = dmatrix![1.0, 0.0; 0.0, 1.0];
    StateSpaceModel::from_continuous(ac, bc, c, 0.1).expect("valid bundled system")
}

/// Four-state chain with a single force input and two measured states, so
/// l = 2 > p = 1: reference sequences are only trackable after projection or
/// output dropping. The open-loop plant is unstable.
pub fn oscillator_chain() -> StateSpaceModel {
    let a = dmatrix![
        0.1, -0.7, 0.0, 0.0;
        0.7, 0.2, -0.7, 0.0;
        0.0, 0.7, 0.3, -0.7;
        0.0, 0.0, 0.7, 0.4
    ];
    let b = dmatrix![0.0; 1.0; 0.0; 0.0];
    let c = dmatrix![
        0.0, 1.0, 0.0, 0.0;
        1.0, 0.0, 0.0, 0.0
    ];
    StateSpaceModel::new(a, b, c, 0.0).expect("valid bundled system")
}

/// Small stable plant with more inputs than outputs (l = 1 < p = 2), used to
/// demonstrate input-transform squaring.
pub fn wide_plant() -> StateSpaceModel {
    let a = dmatrix![0.5, 0.1; 0.0, 0.3];
    let b = dmatrix![1.0, 0.0; 0.0, 1.0];
    let c = dmatrix![1.0, 0.0];
    StateSpaceModel::new(a, b, c, 0.0).expect("valid bundled system")
}
