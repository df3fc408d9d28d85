// WebSocket wrapper with exponential-backoff reconnect.

export interface SocketHandlers {
  onOpen: () => void;
  onClose: () => void;
  onMessage: (raw: unknown) => void;
}

export class ConsoleSocket {
  private ws: WebSocket | null = null;
  private backoffMs = 500;
  private closed = false;

  constructor(private url: string, private handlers: SocketHandlers) {}

  connect(): void {
    this.closed = false;
    this.open();
  }

  private open(): void {
    const ws = new WebSocket(this.url);
    this.ws = ws;
    ws.onopen = () => {
      this.backoffMs = 500;
      this.handlers.onOpen();
    };
    ws.onmessage = (ev) => {
      try {
        this.handlers.onMessage(JSON.parse(ev.data as string));
      } catch {
        this.handlers.onMessage(undefined);
      }
    };
    ws.onclose = () => {
      this.handlers.onClose();
      if (!this.closed) {
        setTimeout(() => this.open(), this.backoffMs);
        this.backoffMs = Math.min(this.backoffMs * 2, 10_000);
      }
    };
    ws.onerror = () => ws.close();
  }

  send(payload: unknown): void {
    if (this.ws && this.ws.readyState === WebSocket.OPEN) {
      this.ws.send(JSON.stringify(payload));
    }
  }

  close(): void {
    this.closed = true;
    this.ws?.close();
  }
}
