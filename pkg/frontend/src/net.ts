// Gateway connection with exponential-backoff reconnect.

import type { UtteranceMessage } from "./protocol.js";

export interface GatewayHandle {
  send(message: UtteranceMessage): boolean;
  close(): void;
}

export interface GatewayCallbacks {
  onEvent(event: unknown): void;
  onStatus(connected: boolean): void;
}

export function connectGateway(url: string,
                               callbacks: GatewayCallbacks): GatewayHandle {
  let socket: WebSocket | null = null;
  let retryMs = 500;
  let closed = false;

  const open = () => {
    if (closed) {
      return;
    }
    socket = new WebSocket(url);
    socket.onopen = () => {
      retryMs = 500;
      callbacks.onStatus(true);
    };
    socket.onmessage = (ev: MessageEvent) => {
      try {
        callbacks.onEvent(JSON.parse(String(ev.data)));
      } catch {
        // non-JSON frames are dropped
      }
    };
    socket.onclose = () => {
      callbacks.onStatus(false);
      if (!closed) {
        setTimeout(open, retryMs);
        retryMs = Math.min(retryMs * 2, 15000);
      }
    };
    socket.onerror = () => {
      socket?.close();
    };
  };

  open();
  return {
    send(message) {
      if (socket && socket.readyState === WebSocket.OPEN) {
        socket.send(JSON.stringify(message));
        return true;
      }
      return false;
    },
    close() {
      closed = true;
      socket?.close();
    },
  };
}
