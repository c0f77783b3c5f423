import socket
import threading
import time

import pytest
import uvicorn

from modelshim.service import create_app
from modelshim.stub import StubBackends


class ServerHandle:
    def __init__(self, server, thread, port):
        self.server = server
        self.thread = thread
        self.base_url = f"http://127.0.0.1:{port}"

    def stop(self):
        self.server.should_exit = True
        self.thread.join(timeout=5)


def start_server(app) -> ServerHandle:
    sock = socket.socket()
    sock.bind(("127.0.0.1", 0))
    port = sock.getsockname()[1]
    config = uvicorn.Config(app, log_level="warning")
    server = uvicorn.Server(config)
    thread = threading.Thread(target=server.run, kwargs={"sockets": [sock]}, daemon=True)
    thread.start()
    deadline = time.time() + 10
    while not server.started:
        if time.time() > deadline:
            raise RuntimeError("server failed to start")
        time.sleep(0.01)
    return ServerHandle(server, thread, port)


@pytest.fixture
def stub_server():
    handle = start_server(create_app(StubBackends(), queue_size=16))
    try:
        yield handle
    finally:
        handle.stop()
