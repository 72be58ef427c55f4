"""Command-line pipeline: heatmap, plan, evaluate, tile prefetch, label lookup."""

from __future__ import annotations

import sys
from pathlib import Path

import click

from . import report
from .backends import (
    StaticLabelMap,
    SubprocessBackend,
    SyntheticBackend,
    expand_labels,
    segment_windows,
)
from .config import RunConfig, bundled_labels_map, load_config
from .errors import InputError, LMPathError
from .geoplan import GeoPlan, frame_for, parse_plan, write_mission
from .planner import (
    MODE_BASELINE_TSP,
    MODE_MIN_EXPECTED_TIME,
    MODE_THRESHOLD_TSP,
    expected_time,
    instance_from_waypoints,
    solve_baseline_tsp,
    solve_min_latency,
    solve_threshold_tsp,
)
from .prior import aggregate_label, build_heatmap, make_window_grid
from .scenario import load_scenario, validate_targets
from .simeval import compare
from .tiles import compose, export_png, fetch_tiles, zoom_for_resolution
from .waypoints import SensorModel, build_domain, build_waypoint_set, to_geojson


def _read_plan(cfg: RunConfig, plan_file: str) -> GeoPlan:
    data = Path(plan_file).read_bytes()
    return parse_plan(
        data,
        default_cruise_speed=cfg.default_cruise_speed,
        flight_altitude=cfg.flight_altitude,
    )


def _build_mosaic(cfg: RunConfig, plan: GeoPlan):
    if not cfg.tile_url:
        raise InputError("no tile source configured (tile_url / TILE_URL)")
    zoom = cfg.zoom or zoom_for_resolution(
        plan.geofence.centroid().lat, cfg.target_mpp, cfg.max_zoom
    )
    got = fetch_tiles(
        plan.geofence.bounds(),
        zoom,
        cfg.tile_url,
        cfg.tile_cache,
        token=cfg.tile_token,
        offline=cfg.offline,
        parallelism=cfg.tile_parallelism,
    )
    return compose(got, zoom), zoom


class _ChainedExpander:
    """Static map first, external adapter as fallback for unknown targets."""

    def __init__(self, *expanders):
        self._expanders = expanders

    def expand(self, target: str):
        for e in self._expanders:
            got = e.expand(target)
            if got:
                return got
        return None


def _label_backend(cfg: RunConfig, external=None):
    static = StaticLabelMap.from_file(cfg.labels_map or bundled_labels_map())
    if external is not None:
        return _ChainedExpander(static, external)
    return static


def _segmentation_backend(cfg: RunConfig, domain):
    if cfg.backend == "external":
        if not cfg.backend_cmd:
            raise InputError("external backend selected but backend_cmd / LMPATH_BACKEND_CMD empty")
        return SubprocessBackend(cfg.backend_cmd)
    if not cfg.scenario:
        raise InputError("synthetic backend requires a scenario file (config key 'scenario')")
    return SyntheticBackend(load_scenario(cfg.scenario), domain)


def _heat_pipeline(cfg: RunConfig, plan: GeoPlan, target: str):
    frame = frame_for(plan)
    mosaic, zoom = _build_mosaic(cfg, plan)
    domain = build_domain(mosaic, plan, frame)
    seg = _segmentation_backend(cfg, domain)
    expander = _label_backend(cfg, seg if isinstance(seg, SubprocessBackend) else None)
    labels = expand_labels(target, expander)
    grid = make_window_grid(mosaic.width, mosaic.height, cfg.window_px, cfg.window_overlap)
    masks = segment_windows(mosaic, grid, labels, seg, workers=cfg.workers)
    label_masks = [
        aggregate_label({wi: masks[(wi, l)] for wi in range(len(grid.windows))}, grid, l)
        for l in labels.labels
    ]
    heat = build_heatmap(
        label_masks, domain.mask, domain.pixel_area, normalize_over=cfg.normalize_over
    )
    if isinstance(seg, SubprocessBackend):
        seg.close()
    return {
        "frame": frame,
        "mosaic": mosaic,
        "zoom": zoom,
        "domain": domain,
        "labels": labels,
        "heat": heat,
    }


def _sensor(cfg: RunConfig) -> SensorModel:
    return SensorModel(
        footprint_width=cfg.footprint_width,
        lateral_overlap=cfg.lateral_overlap,
        detection_radius=cfg.detection_radius or None,
    )


def _solve(cfg: RunConfig, inst, mode: str):
    if mode == MODE_MIN_EXPECTED_TIME:
        return solve_min_latency(inst, cfg.exact_limit)
    if mode == MODE_THRESHOLD_TSP:
        return solve_threshold_tsp(inst, cfg.rho, cfg.exact_limit)
    if mode == MODE_BASELINE_TSP:
        return solve_baseline_tsp(inst, cfg.exact_limit)
    raise InputError(f"unknown mode '{mode}'")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _common(fn):
    fn = click.option("--config", "-c", "config_path", type=click.Path(), default=None,
                      help="key-value config file")(fn)
    fn = click.option("--out", "-o", "output_dir", default=None, help="output directory")(fn)
    fn = click.option("--offline", is_flag=True, default=None,
                      help="serve tiles from cache only")(fn)
    fn = click.option("--scenario", "scenario", default=None,
                      help="scenario JSON (ground truth for the synthetic backend)")(fn)
    fn = click.option("--backend", default=None, type=click.Choice(["synthetic", "external"]))(fn)
    fn = click.option("--backend-cmd", "backend_cmd", default=None,
                      help="external adapter launch command")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    return fn


@click.group()
def cli():
    """Semantic exploration priors and search-path planning for UAV missions."""


@cli.command("heatmap")
@click.argument("plan_file", type=click.Path(exists=True))
@click.argument("target")
@_common
def cmd_heatmap(plan_file, target, config_path, **overrides):
    """Build the heat-density prior for TARGET over the plan's geofence."""
    cfg = load_config(config_path, **overrides)
    plan = _read_plan(cfg, plan_file)
    parts = _heat_pipeline(cfg, plan, target)
    out = _out_dir(cfg)

    export_png(parts["mosaic"], out / "mosaic.png")
    report.write_heatmap_png(parts["heat"], out / "heatmap.png")
    report.save_json(report.heatmap_sidecar(parts["heat"], parts["mosaic"]), out / "heatmap.json")
    report.save_json(
        report.contours_geojson(parts["heat"], parts["mosaic"]),
        out / "heatmap_contours.geojson",
    )
    report.render_heatmap_figure(
        out / "heatmap_overlay.png", parts["mosaic"], parts["heat"], parts["domain"]
    )
    click.echo(f"labels: {', '.join(parts['labels'].labels)}")
    if parts["heat"].uniform_fallback:
        click.echo("warning: all-zero prior, fell back to the uniform density")
    click.echo(f"wrote heatmap artifacts to {out} (zoom {parts['zoom']})")


@cli.command("plan")
@click.argument("plan_file", type=click.Path(exists=True))
@click.argument("target")
@click.option("--mode", default=None,
              type=click.Choice([MODE_MIN_EXPECTED_TIME, MODE_THRESHOLD_TSP, MODE_BASELINE_TSP]))
@click.option("--rho", type=float, default=None, help="density threshold for threshold-tsp")
@_common
def cmd_plan(plan_file, target, config_path, **overrides):
    """Solve a search path for TARGET and export the flyable mission."""
    cfg = load_config(config_path, **overrides)
    plan = _read_plan(cfg, plan_file)
    parts = _heat_pipeline(cfg, plan, target)
    frame, domain, heat = parts["frame"], parts["domain"], parts["heat"]

    wpset = build_waypoint_set(domain, _sensor(cfg), heat, frame.to_local(plan.home))
    inst = instance_from_waypoints(wpset, plan.cruise_speed)
    solved, rep = _solve(cfg, inst, cfg.mode)
    out = _out_dir(cfg)

    mission_path = [frame.to_geo(*wpset.points[i]) for i in solved.order]
    (out / "mission.plan").write_bytes(write_mission(plan, mission_path, rtl=True))
    report.save_json(
        report.path_geojson(solved, wpset, frame, plan.cruise_speed), out / "path.geojson"
    )
    report.save_json(to_geojson(wpset, frame), out / "waypoints.geojson")
    et = expected_time(solved, wpset.masses)
    report.save_json(
        {
            "mode": solved.mode,
            "optimality": solved.optimality,
            "objective": solved.objective,
            "solved_value": solved.solved_value,
            "lower_bound": solved.lower_bound,
            "bound_gap": rep.bound_gap,
            "nodes_explored": rep.nodes_explored,
            "wall_time_s": rep.wall_time,
            "waypoints_total": len(wpset.points),
            "waypoints_visited": len(solved.order),
            "expected_time_raw": et.raw,
            "expected_time_normalized": et.normalized,
            "covered_mass": et.covered_mass,
        },
        out / "solver_report.json",
    )
    report.render_path_figure(out / "path.png", domain, wpset, solved)
    click.echo(
        f"{solved.mode}: visits {len(solved.order)}/{len(wpset.points)} waypoints, "
        f"objective {solved.objective:.3f} ({solved.optimality})"
    )
    click.echo(f"wrote mission artifacts to {out}")


@cli.command("evaluate")
@click.argument("plan_file", type=click.Path(exists=True))
@click.argument("scenario_file", type=click.Path(exists=True))
@click.option("--trials", type=int, default=50, show_default=True)
@click.option("--target", default="car", show_default=True)
@_common
def cmd_evaluate(plan_file, scenario_file, trials, target, config_path, **overrides):
    """Compare the expected-time planner against the coverage TSP baseline."""
    overrides.setdefault("scenario", None)
    if overrides["scenario"] is None:
        overrides["scenario"] = scenario_file
    cfg = load_config(config_path, **overrides)
    plan = _read_plan(cfg, plan_file)
    parts = _heat_pipeline(cfg, plan, target)
    frame, domain, heat = parts["frame"], parts["domain"], parts["heat"]

    scn = load_scenario(scenario_file)
    validate_targets(scn, domain.fence_ring)
    sensor = _sensor(cfg)
    wpset = build_waypoint_set(domain, sensor, heat, frame.to_local(plan.home))
    inst = instance_from_waypoints(wpset, plan.cruise_speed)
    lm, _ = solve_min_latency(inst, cfg.exact_limit)
    bl, _ = solve_baseline_tsp(inst, cfg.exact_limit)

    summary = compare(
        {"lmpath": lm, "baseline-tsp": bl},
        scn,
        trials,
        points=wpset.points,
        base=wpset.base,
        speed=plan.cruise_speed,
        sensor=sensor,
        seed=cfg.seed if cfg.seed >= 0 else None,
    )
    out = _out_dir(cfg)
    report.save_json({k: v for k, v in summary.items() if k != "results"}, out / "summary.json")
    (out / "trials.csv").write_text(report.trials_csv(summary))
    table = report.summary_table(summary)
    (out / "table.txt").write_text(table)
    report.render_eval_figure(out / "detection_times.png", summary)
    click.echo(table, nl=False)
    click.echo(f"wrote evaluation artifacts to {out}")


@cli.group("tiles")
def cmd_tiles():
    """Tile cache utilities."""


@cmd_tiles.command("fetch")
@click.argument("plan_file", type=click.Path(exists=True))
@click.option("--zoom", type=int, default=None, help="explicit zoom level")
@_common
def cmd_tiles_fetch(plan_file, zoom, config_path, **overrides):
    """Prefetch all tiles covering the plan's geofence into the cache."""
    if zoom is not None:
        overrides["zoom"] = zoom
    cfg = load_config(config_path, **overrides)
    plan = _read_plan(cfg, plan_file)
    if not cfg.tile_url:
        raise InputError("no tile source configured (tile_url / TILE_URL)")
    z = cfg.zoom or zoom_for_resolution(plan.geofence.centroid().lat, cfg.target_mpp, cfg.max_zoom)
    got = fetch_tiles(
        plan.geofence.bounds(),
        z,
        cfg.tile_url,
        cfg.tile_cache,
        token=cfg.tile_token,
        offline=cfg.offline,
        parallelism=cfg.tile_parallelism,
    )
    click.echo(f"cached {len(got)} tiles at zoom {z}")


@cli.command("labels")
@click.argument("target")
@_common
def cmd_labels(target, config_path, **overrides):
    """Print the context labels TARGET expands to."""
    cfg = load_config(config_path, **overrides)
    external = None
    if cfg.backend == "external" and cfg.backend_cmd:
        external = SubprocessBackend(cfg.backend_cmd)
    try:
        labels = expand_labels(target, _label_backend(cfg, external))
    finally:
        if external is not None:
            external.close()
    click.echo(f"labels: {', '.join(labels.labels)}")


def main():
    try:
        cli(standalone_mode=False)
    except LMPathError as e:
        click.echo(f"error ({e.category}): {e}", err=True)
        sys.exit(e.exit_code)
    except click.exceptions.Abort:
        sys.exit(130)
    except click.ClickException as e:
        e.show()
        sys.exit(2)


if __name__ == "__main__":
    main()
