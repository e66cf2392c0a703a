use ticnn::training::{
    desk_train_config, full_train_config, mnist_network_spec, ExperimentConfig, NetworkSpec,
    LayerSpec, TrainConfig,
};

fn write(path: &str, cfg: &ExperimentConfig) {
    let text = toml::to_string_pretty(cfg).unwrap();
    std::fs::write(path, text).unwrap();
    println!("wrote {path}");
}

fn main() {
    std::fs::create_dir_all("configs").unwrap();
    for (ti, ti_tag) in [(false, "cnn"), (true, "ticnn")] {
        for (desk, sched_tag) in [(true, "desk"), (false, "full")] {
            for canvas in [28usize, 42] {
                let filters = if desk { 16 } else { 64 };
                let network = mnist_network_spec(filters, canvas, ti, 0);
                let train = if desk { desk_train_config(0) } else { full_train_config(0) };
                let canvas_tag = if canvas == 28 { String::new() } else { format!("{canvas}") };
                let path = format!("configs/mnist_{ti_tag}_{sched_tag}{canvas_tag}.toml");
                write(&path, &ExperimentConfig { network, train });
            }
        }
    }
    // tiny gradient-check architecture on 8x8 inputs
    let network = NetworkSpec {
        input: [1, 8, 8],
        seed: 0,
        layers: vec![
            LayerSpec::Conv { filters: 8, kernel: 3, stride: 1, padding: 0 },
            LayerSpec::Ti {
                mu_theta: 0.0,
                sigma_theta: 30.0,
                mu_s: 1.0,
                sigma_s: 0.15,
                mu_d: 0.0,
                sigma_d: 0.2,
                isotropic: false,
                seed: None,
            },
            LayerSpec::Conv { filters: 8, kernel: 3, stride: 1, padding: 0 },
            LayerSpec::Maxpool { window: 2, stride: 2 },
            LayerSpec::Dense { units: 5 },
        ],
    };
    let mut train = desk_train_config(0);
    train.iterations = 100;
    write("configs/gradcheck_tiny.toml", &ExperimentConfig { network, train });
}
