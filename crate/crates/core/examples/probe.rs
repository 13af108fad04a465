// scratch probe
use imle_policy::envs::pushlite::*;
use imle_policy::imle::Horizons;
use imle_policy::metrics::*;
use imle_policy::rng::{StreamKind, StreamRng};

fn main() {
    // demonstrator stats over many inits
    let mut fails = 0; let mut misclass = 0; let mut lens = vec![];
    for i in 0..250u64 {
        for &mode in &[MODE_LEFT, MODE_RIGHT] {
            let mut init_rng = StreamRng::new(77, StreamKind::Episode, i);
            let init = random_init(&mut init_rng);
            let mut jr = StreamRng::new(78, StreamKind::Episode, i * 2 + mode as u64);
            let ep = scripted_demonstrator(init, mode, 0.01, &mut jr).unwrap();
            lens.push(ep.steps.len());
            if !ep.success {
                fails += 1;
                if fails < 5 { println!("FAIL i={i} mode={mode} len={} init eff=({:.3},{:.3}) block=({:.3},{:.3})", ep.steps.len(), init.effector[0], init.effector[1], init.block[0], init.block[1]); }
            }
            if classify_episode_by_contacts(&ep) != Some(mode) { misclass += 1; }
        }
    }
    lens.sort();
    println!("fails={fails}/500 misclass={misclass} len min={} med={} max={}", lens[0], lens[lens.len()/2], lens[lens.len()-1]);

    // scripted controller through rollout machinery
    let horizons = Horizons { obs: 2, pred: 16, exec: 8 };
    let mut ctl = ScriptedController::new(horizons);
    let eval = rollout_success_rate(&mut ctl, 50, EPISODE_CAP, 123).unwrap();
    println!("scripted rollout: {}/{}", eval.successes, eval.episodes);
}
