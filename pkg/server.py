#!/usr/bin/env python3
"""
MCP server for the diameter lab

Exposes the lab's operations as MCP tools and delegates every call to
the Flask backend (run.py), which it launches on startup.

USAGE:
    python server.py
"""

import asyncio
import json
import logging
import os
import signal
import socket
import subprocess
import sys
import time
from pathlib import Path
from typing import Any, Dict, List, Optional

import aiohttp
from mcp.server.models import InitializationOptions
from mcp.server import NotificationOptions, Server
from mcp.server.stdio import stdio_server
import mcp.types as types

logging.basicConfig(level=logging.INFO, format='%(asctime)s - %(name)s - %(levelname)s - %(message)s')
logger = logging.getLogger(__name__)

# ============================================================================
# CONFIGURATION
# ============================================================================

SERVER_NAME = "fatou-diameter-lab"
SERVER_VERSION = "1.0.0"

FLASK_HOST = os.getenv("FLASK_HOST", "127.0.0.1")
FLASK_PORT = int(os.getenv("FLASK_PORT", 5001))
FLASK_BASE_URL = f"http://{FLASK_HOST}:{FLASK_PORT}"

server = Server(SERVER_NAME)

_P = {"type": "integer", "description": "Prime p"}
_ELLS = {"type": "string", "description": "EllSpec: 'id' or 'prefix=a,b;cycle=c,d'", "default": "id"}
_BETA = {"type": "string", "description": "Eventually constant 0/1 sequence 'bits;tail=b'"}
_RATIONAL = {"type": "string", "description": "Exact rational 'n/d'"}
_LAB = {
    "p": _P,
    "e": {"type": "integer", "description": "Ramification index"},
    "va": {"type": "string", "description": "Valuation of a in (1/e)Z", "default": "-1"},
    "seed": {"type": "integer"},
    "trials": {"type": "integer", "default": 100},
    "precision": {"type": "integer", "description": "Absolute pi-adic precision (default 64 e)"},
}

# tool name -> (endpoint, description, properties, required)
TOOLS = {
    "compute_constants": ("/api/constants", "q, kappa and the Cantor constants P, Q, B, E, F, R, R' for a prime",
                          {"p": _P}, ["p"]),
    "verify_diameter": ("/api/verify", "Replay the ball dynamics and check every diameter checkpoint exactly",
                        {"p": _P, "ells": _ELLS, "s_max": {"type": "integer"}, "d0": _RATIONAL}, ["p", "s_max"]),
    "trace_ball": ("/api/trace", "Step-by-step trace of the ball diameter exponent",
                   {"p": _P, "ells": _ELLS, "steps": {"type": "integer"}, "d0": _RATIONAL,
                    "trace_cap": {"type": "integer"}}, ["p", "steps"]),
    "certify_component": ("/api/certify", "Show that a strictly larger disk leaves the filled Julia set",
                          {"p": _P, "ells": _ELLS, "tprime": _RATIONAL, "gap": _RATIONAL,
                           "budget": {"type": "integer", "default": 500}}, ["p"]),
    "cantor_identity": ("/api/cantor/identity", "Check the affine identity between beta and the diameter exponent",
                        {"p": _P, "beta": _BETA}, ["p", "beta"]),
    "cantor_ells": ("/api/cantor/ells", "Index sequence attached to a 0/1 sequence",
                    {"p": _P, "beta": _BETA, "count": {"type": "integer", "default": 12}}, ["p", "beta"]),
    "digit_decompose": ("/api/decompose", "Split a finite base-B rational into its digit family",
                        {"p": _P, "tau": _RATIONAL}, ["p", "tau"]),
    "fieldlab_contraction": ("/api/fieldlab/lemma32", "Random trials of the contraction lemma in a ramified field",
                             {**_LAB, "item": {"type": "integer", "enum": [1, 2, 3]},
                              "m": {"type": "integer", "default": 1}}, ["p", "e", "seed", "item"]),
    "fieldlab_perturbation": ("/api/fieldlab/perturbation", "Random trials of the parameter perturbation lemmas",
                              {**_LAB, "which": {"type": "string", "enum": ["lemma42", "lemma43"]},
                               "size": {"type": "integer", "description": "M for lemma42, m for lemma43"}},
                              ["p", "e", "seed", "which", "size"]),
}


# ============================================================================
# FLASK SERVER MANAGER
# ============================================================================

class FlaskServerManager:
    """
    Manages the Flask server process lifecycle
    """

    def __init__(self, host: str = FLASK_HOST, port: int = FLASK_PORT):
        self.host = host
        self.port = port
        self.process = None
        self.base_dir = Path(__file__).parent

    def start_flask_server(self) -> bool:
        """
        Start run.py in a subprocess unless something already listens on the port

        Returns:
            True if the server is reachable, False otherwise
        """
        try:
            if self._is_port_in_use():
                logger.info(f"Port {self.port} already in use - assuming the Flask server is running")
                return True

            cmd = [sys.executable, str(self.base_dir / "run.py")]
            env = {**os.environ, "FLASK_HOST": self.host, "FLASK_PORT": str(self.port), "FLASK_DEBUG": "False"}
            logger.info(f"Starting Flask server: {' '.join(cmd)}")
            self.process = subprocess.Popen(
                cmd, cwd=self.base_dir, env=env,
                stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True,
            )

            if self._wait_for_server_ready():
                logger.info(f"Flask server ready (PID: {self.process.pid})")
                return True
            if self.process.poll() is not None:
                stdout, stderr = self.process.communicate()
                logger.error(f"Flask server exited: {stderr or stdout}")
            else:
                logger.error("Flask server started but not responding")
                self.stop_flask_server()
            return False
        except Exception as e:
            logger.error(f"Error starting Flask server: {e}")
            return False

    def stop_flask_server(self):
        if not self.process:
            return
        try:
            self.process.terminate()
            try:
                self.process.wait(timeout=5)
            except subprocess.TimeoutExpired:
                logger.warning("Force killing Flask server...")
                self.process.kill()
                self.process.wait()
            logger.info("Flask server stopped")
        except Exception as e:
            logger.error(f"Error stopping Flask server: {e}")
        finally:
            self.process = None

    def _is_port_in_use(self) -> bool:
        try:
            with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
                sock.settimeout(1)
                return sock.connect_ex((self.host, self.port)) == 0
        except OSError:
            return False

    def _wait_for_server_ready(self, timeout: int = 10) -> bool:
        deadline = time.time() + timeout
        while time.time() < deadline:
            if self._is_port_in_use():
                return True
            if self.process and self.process.poll() is not None:
                return False
            time.sleep(0.5)
        return False


# ============================================================================
# FLASK API CLIENT
# ============================================================================

class FlaskAPIClient:
    """
    Client for communicating with the Flask backend
    """

    def __init__(self, base_url: str = FLASK_BASE_URL):
        self.base_url = base_url
        self.session: Optional[aiohttp.ClientSession] = None

    async def _get_session(self) -> aiohttp.ClientSession:
        if self.session is None:
            self.session = aiohttp.ClientSession()
        return self.session

    async def request(self, method: str, endpoint: str, data: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
        """
        Call the Flask server

        Raises:
            Exception: the server answered with an error status or is unreachable
        """
        url = f"{self.base_url}{endpoint}"
        session = await self._get_session()
        try:
            async with session.request(method.upper(), url, json=data) as response:
                result = await response.json()
                if response.status >= 400:
                    logger.error(f"Flask API error {response.status}: {result}")
                    raise Exception(f"API error: {result.get('error', 'Unknown error')}")
                return result
        except aiohttp.ClientError as e:
            logger.error(f"Failed to connect to Flask server: {e}")
            raise Exception("Flask server not available. Please start the Flask server first.")

    async def health_check(self) -> Dict[str, Any]:
        return await self.request("GET", "/health")

    async def close(self):
        if self.session:
            try:
                await self.session.close()
            except Exception as e:
                logger.warning(f"Error closing HTTP session: {e}")
            finally:
                self.session = None


flask_manager = FlaskServerManager()
flask_client = FlaskAPIClient()


# ============================================================================
# MCP TOOLS
# ============================================================================

@server.list_tools()
async def handle_list_tools() -> List[types.Tool]:
    tools = [
        types.Tool(
            name=name,
            description=description,
            inputSchema={"type": "object", "properties": properties, "required": required},
        )
        for name, (_, description, properties, required) in TOOLS.items()
    ]
    report_id = {"type": "object", "properties": {"report_id": {"type": "string"}}, "required": ["report_id"]}
    tools += [
        types.Tool(name="list_reports", description="List archived reports, newest first",
                   inputSchema={"type": "object", "properties": {"limit": {"type": "integer"},
                                                                 "command": {"type": "string"}}}),
        types.Tool(name="get_report", description="Fetch an archived report", inputSchema=report_id),
        types.Tool(name="delete_report", description="Delete an archived report", inputSchema=report_id),
        types.Tool(name="health_check", description="Check Flask server health",
                   inputSchema={"type": "object", "properties": {}}),
    ]
    return tools


def _text(payload: Any) -> List[types.TextContent]:
    text = payload if isinstance(payload, str) else json.dumps(payload, indent=2, sort_keys=True)
    return [types.TextContent(type="text", text=text)]


@server.call_tool()
async def handle_call_tool(name: str, arguments: Dict[str, Any]) -> List[types.TextContent]:
    """Delegate tool calls to the Flask server"""
    arguments = arguments or {}
    try:
        if name in TOOLS:
            endpoint = TOOLS[name][0]
            result = await flask_client.request("POST", endpoint, arguments)
            if not result.get("success"):
                raise Exception(result.get("error", f"{name} failed"))
            return _text({"passed": result["passed"], "report_id": result["report_id"], "report": result["report"]})

        if name == "list_reports":
            query = "&".join(f"{k}={v}" for k, v in arguments.items() if k in ("limit", "command"))
            result = await flask_client.request("GET", f"/api/reports{'?' + query if query else ''}")
            return _text(result["reports"])
        if name == "get_report":
            result = await flask_client.request("GET", f"/api/reports/{arguments['report_id']}")
            return _text(result["record"])
        if name == "delete_report":
            result = await flask_client.request("DELETE", f"/api/reports/{arguments['report_id']}")
            return _text(result["message"])
        if name == "health_check":
            return _text(await flask_client.health_check())
        raise ValueError(f"Unknown tool: {name}")
    except Exception as e:
        logger.error(f"Error in tool {name}: {e}")
        return [types.TextContent(type="text", text=f"Error in {name}: {str(e)}")]


# ============================================================================
# SERVER STARTUP
# ============================================================================

def setup_signal_handlers():
    def signal_handler(signum, frame):
        logger.info(f"Received signal {signum}, shutting down...")
        flask_manager.stop_flask_server()
        sys.exit(0)

    signal.signal(signal.SIGINT, signal_handler)
    signal.signal(signal.SIGTERM, signal_handler)


async def main():
    logger.info(f"Starting {SERVER_NAME} v{SERVER_VERSION}")
    setup_signal_handlers()

    if not flask_manager.start_flask_server():
        logger.error("Cannot proceed without Flask backend")
        return

    max_retries = 5
    for attempt in range(max_retries):
        try:
            await flask_client.health_check()
            break
        except Exception as e:
            if attempt == max_retries - 1:
                logger.error(f"Flask health check failed after {max_retries} attempts: {e}")
                flask_manager.stop_flask_server()
                return
            logger.warning(f"Flask health check failed (attempt {attempt + 1}/{max_retries}), retrying...")
            await asyncio.sleep(1)

    try:
        async with stdio_server() as (read_stream, write_stream):
            logger.info("MCP server ready")
            await server.run(
                read_stream,
                write_stream,
                InitializationOptions(
                    server_name=SERVER_NAME,
                    server_version=SERVER_VERSION,
                    capabilities=server.get_capabilities(
                        notification_options=NotificationOptions(),
                        experimental_capabilities={},
                    ),
                ),
            )
    except KeyboardInterrupt:
        logger.info("Received interrupt signal")
    except Exception as e:
        logger.error(f"MCP server error: {type(e).__name__}: {e}")
        for i, exc in enumerate(getattr(e, 'exceptions', ()), start=1):
            logger.error(f"  {i}. {type(exc).__name__}: {exc}")
    finally:
        await flask_client.close()
        flask_manager.stop_flask_server()
        logger.info("All servers stopped")


if __name__ == "__main__":
    asyncio.run(main())
