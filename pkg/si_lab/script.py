# si_lab/script.py
"""
Directed interleavings.

A script is a text file with one handler call per line. Header directives
(``deployment``, ``replicas``, ``shards``, ``replication``, ``seed``) come
first; every later line is a command on a named session or a replication
round. After each command the scheduler runs until nothing is runnable, so a
command either completes or leaves its session blocked until a later command
(usually ``replicate``) unblocks it.
"""
import logging
import shlex
from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

from .errors import ScriptError, SiLabError
from .harness import ClientSession, RsClientSession, Simulation
from .model import History
from .scheduler import Process
from .workload import SimConfig

logger = logging.getLogger(__name__)

DIRECTIVES = ("deployment", "replicas", "shards", "replication", "seed")
SCRIPT_REPLICATION_MODES = ("eager", "manual")

# command -> number of arguments after the session name
SESSION_COMMANDS = {
    "read": 1,
    "update": 2,
    "commit": 0,
    "rollback": 0,
    "commit-ts": 0,
    "commit-local": 0,
    "commit-wait": 0,
}
RS_STEP_COMMANDS = ("commit-ts", "commit-local", "commit-wait")
# commands that act on an already running transaction
STEP_COMMANDS = ("commit", "rollback") + RS_STEP_COMMANDS


@dataclass(frozen=True)
class ScriptCommand:
    line_no: int
    name: str
    args: Tuple[str, ...]

    def __str__(self):
        return " ".join((self.name,) + self.args)


@dataclass
class Script:
    deployment: str = "wt"
    replicas: int = 3
    shards: int = 1
    replication: str = "manual"
    seed: int = 0
    commands: List[ScriptCommand] = field(default_factory=list)


@dataclass
class ScriptResult:
    """What a directed run produced"""
    history: History
    simulation: Simulation
    sessions: Dict[str, int]
    # (command, value returned by the handler) per completed command
    outputs: List[Tuple[str, Any]] = field(default_factory=list)

    def reads(self, session: str) -> List[int]:
        """Values read by a session's committed and aborted transactions, in order"""
        session_id = self.sessions[session]
        return [op.value for txn in self.history.transactions if txn.session_id == session_id
                for op in txn.ops if op.is_read]

    def txns(self, session: str):
        session_id = self.sessions[session]
        return [txn for txn in self.history.transactions if txn.session_id == session_id]


def _int(value: str, line_no: int, what: str) -> int:
    try:
        return int(value)
    except ValueError:
        raise ScriptError(f"line {line_no}: {what} must be an integer, got {value!r}") from None


def parse_script(text: str) -> Script:
    """
    Parse a directed script

    Args:
        text: Script source; '#' starts a comment

    Returns:
        Script with its header settings and commands
    """
    script = Script()
    for line_no, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            words = shlex.split(line)
        except ValueError as e:
            raise ScriptError(f"line {line_no}: {e}") from e
        name, args = words[0].lower(), tuple(words[1:])

        if name in DIRECTIVES:
            if script.commands:
                raise ScriptError(f"line {line_no}: directive {name!r} after the first command")
            if len(args) != 1:
                raise ScriptError(f"line {line_no}: {name} takes one argument")
            value = args[0]
            if name == "deployment":
                if value not in ("wt", "rs", "sc"):
                    raise ScriptError(f"line {line_no}: unknown deployment {value!r}")
                script.deployment = value
            elif name == "replication":
                if value not in SCRIPT_REPLICATION_MODES:
                    raise ScriptError(f"line {line_no}: replication must be eager or manual")
                script.replication = value
            else:
                number = _int(value, line_no, name)
                if name != "seed" and number < 1:
                    raise ScriptError(f"line {line_no}: {name} must be positive")
                setattr(script, name, number)
            continue

        if name == "replicate":
            wanted = 2 if script.deployment == "sc" else 1
            if len(args) != wanted:
                usage = "replicate SHARD SECONDARY" if wanted == 2 else "replicate SECONDARY"
                raise ScriptError(f"line {line_no}: usage: {usage}")
        elif name in SESSION_COMMANDS:
            if len(args) != SESSION_COMMANDS[name] + 1:
                raise ScriptError(f"line {line_no}: {name} takes {SESSION_COMMANDS[name] + 1} arguments")
            if name in RS_STEP_COMMANDS and script.deployment != "rs":
                raise ScriptError(f"line {line_no}: {name} only applies to replica-set scripts")
        else:
            raise ScriptError(f"line {line_no}: unknown command {name!r}")
        script.commands.append(ScriptCommand(line_no, name, args))
    return script


def load_script(path: str) -> Script:
    try:
        with open(path, 'r', encoding='utf-8') as f:
            text = f.read()
    except OSError as e:
        raise ScriptError(f"cannot read script {path}: {e}") from e
    return parse_script(text)


class _DirectedRun:
    def __init__(self, script: Script):
        self.script = script
        cfg = SimConfig(deployment=script.deployment, seed=script.seed, txn_num=1, concurrency=1,
                        replica_count=script.replicas, shard_count=script.shards, mongos_count=1,
                        clock_skew_ns=0)
        mode = "manual" if script.replication == "manual" else "eager"
        self.sim = Simulation(cfg, replication_mode=mode, fixed_delays=True)
        self.sessions: Dict[str, int] = {}
        self.clients: Dict[str, ClientSession] = {}
        self.running: Dict[str, Process] = {}
        self.outputs: List[Tuple[str, Any]] = []

    def _client(self, command: ScriptCommand) -> ClientSession:
        name = command.args[0]
        if name not in self.clients:
            if command.name in STEP_COMMANDS:
                raise ScriptError(f"line {command.line_no}: unknown session {name!r}")
            self.sessions[name] = len(self.sessions) + 1
            self.clients[name] = self.sim.session(self.sessions[name])
        proc = self.running.get(name)
        if proc is not None and not proc.done:
            label = proc.waiting_on.label if proc.waiting_on else "running"
            raise ScriptError(f"line {command.line_no}: session {name!r} is blocked ({label})")
        return self.clients[name]

    def _body(self, client: ClientSession, command: ScriptCommand):
        name, args = command.name, command.args
        if name in STEP_COMMANDS and not client.active:
            raise ScriptError(f"line {command.line_no}: session {args[0]!r} has no running transaction")
        if name in ("commit", "commit-ts") and not client.ops:
            raise ScriptError(f"line {command.line_no}: session {args[0]!r} has nothing to commit")
        if name == "commit-local" and client.commit_ts is None:
            raise ScriptError(f"line {command.line_no}: commit-local before commit-ts on session {args[0]!r}")
        if name == "commit-wait" and client.local_meta is None:
            raise ScriptError(f"line {command.line_no}: commit-wait before commit-local on session {args[0]!r}")
        if not client.active:
            client.begin(self.sim.next_txn_id())

        if name == "read":
            result = yield from client.read(args[1])
        elif name == "update":
            result = yield from client.update(args[1], _int(args[2], command.line_no, "value"))
            if not result:
                client.abort_record()
        elif name == "commit":
            result = yield from client.commit()
        elif name == "rollback":
            result = yield from client.rollback()
        elif name == "commit-ts":
            result = yield from client.commit_ts_step()
        elif name == "commit-local":
            result = yield from client.commit_local_step()
        else:
            result = yield from client.commit_wait_step()
        self.outputs.append((str(command), result))
        return result

    def _replicate(self, command: ScriptCommand) -> None:
        if self.script.deployment == "wt":
            raise ScriptError(f"line {command.line_no}: a standalone engine has no secondaries")
        if self.script.deployment == "sc":
            shard = _int(command.args[0], command.line_no, "shard")
            if not 0 <= shard < len(self.sim.drivers):
                raise ScriptError(f"line {command.line_no}: unknown shard {shard}")
            driver, secondary = self.sim.drivers[shard], f"shard{shard}/{command.args[1]}"
        else:
            driver, secondary = self.sim.drivers[0], command.args[0]
        try:
            driver.replicate(secondary)
        except KeyError:
            raise ScriptError(f"line {command.line_no}: unknown secondary {command.args[-1]!r}") from None

    def execute(self, command: ScriptCommand) -> None:
        logger.debug("script line %d: %s", command.line_no, command)
        if command.name == "replicate":
            self._replicate(command)
        else:
            client = self._client(command)
            if command.name in RS_STEP_COMMANDS and not isinstance(client, RsClientSession):
                raise ScriptError(f"line {command.line_no}: {command.name} only applies to replica-set sessions")
            body = self._body(client, command)
            self.running[command.args[0]] = self.sim.scheduler.spawn(body, f"{command.args[0]}: {command}")
        self.sim.scheduler.run_until_quiescent()


def interleave_directed(script: Script) -> ScriptResult:
    """
    Execute exactly the scripted interleaving

    Args:
        script: Parsed script

    Returns:
        ScriptResult with the history of every finished transaction

    Raises:
        ScriptError: unknown session or command, or sessions still blocked at the end
    """
    run = _DirectedRun(script)
    for command in script.commands:
        try:
            run.execute(command)
        except ScriptError:
            raise
        except SiLabError as e:
            raise ScriptError(f"line {command.line_no} ({command}): {e}") from e

    blocked = [f"{name}: {proc.waiting_on.label}" for name, proc in run.running.items()
               if not proc.done and proc.waiting_on is not None]
    if blocked:
        raise ScriptError("sessions still blocked at end of script: " + "; ".join(blocked))
    open_sessions = [name for name, client in run.clients.items() if client.active]
    if open_sessions:
        logger.warning("transactions left open at end of script: %s", ", ".join(open_sessions))

    return ScriptResult(run.sim.history(), run.sim, dict(run.sessions), run.outputs)
