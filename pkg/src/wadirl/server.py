"""Session service bridging the simulator to the browser client.

One session owns one world. The protocol core (`Session`) is transport-free:
`handle()` consumes one client message and returns the replies, `advance()`
is called by the cadence ticker and returns the frames to push. The
websocket adapter wires those to a connection and owns the timing.

Message schema (JSON, one object per websocket text frame) is documented in
docs/protocol.md; every server message carries this session's strictly
increasing `seq`.
"""

from __future__ import annotations

import asyncio
import json
import os
import signal
from dataclasses import dataclass

from .errors import IntegrityError, RecordingError, UsageError, VersionError, WadirlError
from .scenario import COALITIONS, Scenario
from .sim import (
    ACTION_ATTACK,
    ACTION_MOVE,
    ACTION_NOOP,
    NOOP,
    Command,
    WorldState,
    reset,
    step,
    validate_command,
)
from .trajectory import Demonstration, Recorder, load, replay_prefix, save

PROTOCOL_VERSION = 1
DEFAULT_CADENCE_HZ = 4.0
OUT_QUEUE_SIZE = 256


def frame_payload(state: WorldState, index: int) -> dict:
    """Pure function of WorldState shared by live frames and replay frames."""
    return {
        "index": index,
        "tick": state.tick,
        "score": state.score,
        "done": state.terminal,
        "digest": state.digest(),
        "blue_alive": state.blue_alive(),
        "red_alive": state.red_alive(),
        "units": [
            {
                "id": u.id,
                "side": u.side,
                "coalition": u.coalition,
                "x": u.pos[0],
                "y": u.pos[1],
                "health": u.health,
                "max_health": u.max_health,
                "alive": u.alive,
                "air": u.air,
            }
            for u in state.units()
        ],
    }


def scenario_payload(scenario: Scenario) -> dict:
    t = scenario.terrain
    return {
        "name": scenario.name,
        "hash": scenario.content_hash,
        "width": t.width,
        "height": t.height,
        "wadi_axis": t.wadi_axis,
        "rows": t.rows(),
        "target_bins": scenario.target_bins,
        "max_steps": scenario.max_steps,
        "coalitions": list(COALITIONS),
        "actions": {"noop": ACTION_NOOP, "move": ACTION_MOVE, "attack": ACTION_ATTACK},
    }


@dataclass
class _ReplaySource:
    demo: Demonstration
    frames: list[dict]
    index: int = 0
    playing: bool = False


class Session:
    """Protocol state machine for one connected client."""

    def __init__(
        self,
        scenario: Scenario,
        session_id: str,
        demo_dir: str = ".",
        default_seed: int = 0,
    ):
        self.scenario = scenario
        self.session_id = session_id
        self.demo_dir = demo_dir
        self.default_seed = default_seed
        self.seq = 0
        self.mode = "idle"  # idle | live | done | replay
        self.world: WorldState | None = None
        self.recorder: Recorder | None = None
        self.seed = default_seed
        self.step_index = 0
        self.pending: tuple[Command, int | None] | None = None  # (command, client seq)
        self.replay: _ReplaySource | None = None
        self.last_client_seq: int | None = None
        self.saved_demo_path: str | None = None

    # -- outbound ------------------------------------------------------------

    def _msg(self, kind: str, **payload) -> dict:
        self.seq += 1
        return {"kind": kind, "v": PROTOCOL_VERSION, "session": self.session_id,
                "seq": self.seq, **payload}

    def _error(self, code: str, message: str) -> dict:
        return self._msg("error", code=code, message=message)

    def hello(self) -> dict:
        return self._msg("hello", scenario=scenario_payload(self.scenario),
                         cadence_default_hz=DEFAULT_CADENCE_HZ)

    # -- inbound -------------------------------------------------------------

    def handle(self, msg: dict) -> list[dict]:
        if not isinstance(msg, dict) or "kind" not in msg:
            return [self._error("bad_schema", "message must be an object with a kind")]
        cseq = msg.get("seq")
        if cseq is not None:
            if self.last_client_seq is not None and cseq <= self.last_client_seq:
                return [self._error("stale_seq", f"client seq {cseq} not increasing")]
            self.last_client_seq = cseq
        kind = msg["kind"]
        try:
            if kind == "start_recording":
                return self._start_recording(msg)
            if kind == "issue_command":
                return self._issue_command(msg)
            if kind == "replay_request":
                return self._replay_request(msg)
        except (UsageError, IntegrityError, VersionError, RecordingError) as e:
            return [self._error(type(e).__name__.lower().removesuffix("error"), str(e))]
        except (KeyError, TypeError, ValueError) as e:
            return [self._error("bad_schema", f"malformed {kind} message: {e}")]
        return [self._error("bad_schema", f"unknown message kind {kind!r}")]

    def _start_recording(self, msg: dict) -> list[dict]:
        if self.mode == "live":
            return [self._error("usage", "episode already running")]
        self.seed = int(msg.get("seed", self.default_seed))
        self.world = reset(self.scenario, self.seed)
        self.recorder = Recorder(self.scenario, self.seed)
        self.step_index = 0
        self.pending = None
        self.saved_demo_path = None
        self.mode = "live"
        return [self._msg("frame_update", reward=0, applied=None,
                          **frame_payload(self.world, 0))]

    def _issue_command(self, msg: dict) -> list[dict]:
        if self.mode != "live":
            return [self._error("usage", "no live episode to command")]
        cmd = Command(int(msg["coalition"]), int(msg["action"]),
                      int(msg["x_bin"]), int(msg["y_bin"]))
        validate_command(self.scenario, cmd)
        out = []
        if self.pending is not None:
            dropped_seq = self.pending[1]
            out.append(self._error(
                "superseded",
                f"command (client seq {dropped_seq}) dropped: a newer command "
                f"arrived within the same decision interval",
            ))
        self.pending = (cmd, msg.get("seq"))
        return out

    def _replay_request(self, msg: dict) -> list[dict]:
        if self.mode == "live":
            return [self._error("usage", "cannot replay during a live episode")]
        op = msg.get("op")
        if op == "load":
            demo = load(str(msg["path"]), self.scenario)
            frames = self._build_replay_frames(demo)
            self.replay = _ReplaySource(demo=demo, frames=frames)
            self.mode = "replay"
            return [self._msg("replay_frame", length=demo.length,
                              total_score=demo.total_score, **frames[0])]
        if self.replay is None or self.mode != "replay":
            return [self._error("usage", "no replay loaded")]
        if op == "play":
            self.replay.playing = True
            return []
        if op == "pause":
            self.replay.playing = False
            return []
        if op == "seek":
            index = int(msg["index"])
            if not 0 <= index <= self.replay.demo.length:
                return [self._error("usage", f"seek index {index} out of range")]
            self.replay.index = index
            return [self._msg("replay_frame", **self.replay.frames[index])]
        return [self._error("bad_schema", f"unknown replay op {op!r}")]

    def _build_replay_frames(self, demo: Demonstration) -> list[dict]:
        state = replay_prefix(demo, 0.0, self.scenario)
        frames = [frame_payload(state, 0)]
        for s in demo.steps:
            state, _, _ = step(state, s.command)
            frames.append(frame_payload(state, s.index + 1))
        return frames

    # -- cadence tick ----------------------------------------------------------

    def advance(self) -> list[dict]:
        """One decision interval: apply the pending command (or NoOp) and frame it."""
        if self.mode == "live":
            cmd, _ = self.pending if self.pending is not None else (NOOP, None)
            applied = {"coalition": cmd.coalition, "action": cmd.action,
                       "x_bin": cmd.x_bin, "y_bin": cmd.y_bin}
            self.pending = None
            self.world, reward, done = step(self.world, cmd)
            self.step_index += 1
            self.recorder.on_step(cmd, reward, self.world, done)
            out = [self._msg("frame_update", reward=reward, applied=applied,
                             **frame_payload(self.world, self.step_index))]
            if done:
                demo = self.recorder.finalize()
                path = os.path.join(
                    self.demo_dir,
                    f"demo_seed{self.seed}_{demo.steps[-1].digest[:8]}.demo",
                )
                save(demo, path)
                self.saved_demo_path = path
                self.mode = "done"
                out.append(self._msg("episode_end", length=demo.length,
                                     total_score=demo.total_score, demo_path=path))
            return out
        if self.mode == "replay" and self.replay is not None and self.replay.playing:
            if self.replay.index >= self.replay.demo.length:
                self.replay.playing = False
                return []
            self.replay.index += 1
            return [self._msg("replay_frame", **self.replay.frames[self.replay.index])]
        return []


async def _pump(ws, out_q: asyncio.Queue) -> None:
    while True:
        msg = await out_q.get()
        await ws.send(json.dumps(msg))


async def _ticker(session: Session, out_q: asyncio.Queue, cadence_hz: float) -> None:
    interval = 1.0 / cadence_hz
    while True:
        await asyncio.sleep(interval)
        for msg in session.advance():
            await out_q.put(msg)


async def _handle_client(ws, scenario: Scenario, demo_dir: str, cadence_hz: float,
                         default_seed: int, counter: list[int]) -> None:
    counter[0] += 1
    session = Session(scenario, f"s{counter[0]}", demo_dir, default_seed)
    out_q: asyncio.Queue = asyncio.Queue(maxsize=OUT_QUEUE_SIZE)
    await out_q.put(session.hello())
    pump = asyncio.create_task(_pump(ws, out_q))
    tick = asyncio.create_task(_ticker(session, out_q, cadence_hz))
    try:
        async for raw in ws:
            try:
                msg = json.loads(raw)
            except json.JSONDecodeError:
                msg = None
            replies = session.handle(msg) if msg is not None else [
                session._error("bad_schema", "not valid JSON")
            ]
            for reply in replies:
                await out_q.put(reply)
    finally:
        # client gone: live recordings are discarded per the partial-demo rule
        pump.cancel()
        tick.cancel()


async def serve(scenario: Scenario, host: str = "127.0.0.1", port: int = 8787,
                demo_dir: str = ".", cadence_hz: float = DEFAULT_CADENCE_HZ,
                default_seed: int = 0) -> None:
    """Run the websocket server until cancelled."""
    try:
        import websockets
    except ImportError as e:  # pragma: no cover
        raise WadirlError("the serve command requires the websockets package") from e

    os.makedirs(demo_dir, exist_ok=True)
    counter = [0]

    async def handler(ws):
        await _handle_client(ws, scenario, demo_dir, cadence_hz, default_seed, counter)

    async with websockets.serve(handler, host, port):
        print(f"session server on ws://{host}:{port} (scenario {scenario.name}, "
              f"{cadence_hz:g} steps/s); open the UI and connect", flush=True)
        stop = asyncio.Event()
        loop = asyncio.get_running_loop()
        for sig in (signal.SIGINT, signal.SIGTERM):
            try:
                loop.add_signal_handler(sig, stop.set)
            except NotImplementedError:  # pragma: no cover
                pass
        await stop.wait()
